//! Selfish mining in Ethereum: the `(L_s, L_h)` Markov chain, reward
//! attribution including uncle and nephew rewards, revenue and profitability
//! thresholds, and a block-tree Monte Carlo simulator to check them.

pub mod markov;
pub mod model;
pub mod report;
pub mod revenue;
pub mod rewards;
pub mod sim;

pub use markov::{
    stationary_closed_form, stationary_numeric, transition_rates, EventKind, MarkovError, StationaryDistribution,
    TransitionRate,
};
pub use model::{ChainState, MiningConfig, ReferenceLimit, Reward, RewardSchedule, UncleReward};
