//! Domain types shared by the analytic and simulation layers: the mining
//! parameters, the reward schedule and the `(L_s, L_h)` chain state.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Exact reward amount in units of the static block reward.
pub type Reward = Ratio<i64>;

/// Static reward of a regular block. Every other reward is expressed relative to it.
pub const STATIC_REWARD: Reward = Ratio::new_raw(1, 1);

/// Reference cutoff used by Ethereum: uncles further than six blocks away earn nothing.
pub const ETHEREUM_MAX_REFERENCE_DISTANCE: u32 = 6;

/// Uncle reward paid by Ethereum for an uncle referenced at `distance`:
/// `(8 - distance) / 8` for distances 1 through 6 and zero otherwise.
pub fn ethereum_uncle_reward(distance: u32) -> Reward {
    if (1..=ETHEREUM_MAX_REFERENCE_DISTANCE).contains(&distance) {
        Ratio::new(8 - i64::from(distance), 8)
    } else {
        Reward::zero()
    }
}

/// Distance-independent uncle reward, paid only within the reference cutoff.
pub fn fixed_uncle_reward(value: Reward, distance: u32, limit: ReferenceLimit) -> Reward {
    if limit.allows(distance) {
        value
    } else {
        Reward::zero()
    }
}

/// Hash-power split and tie-breaking parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    /// Fraction of the total hash power controlled by the selfish pool.
    pub alpha: f64,
    /// Fraction of honest hash power that mines on the pool's branch during a tie.
    pub gamma: f64,
}

impl MiningConfig {
    pub fn new(alpha: f64, gamma: f64) -> Self {
        MiningConfig { alpha, gamma }
    }

    /// Honest hash power, always `1 - alpha`.
    #[inline]
    pub fn beta(&self) -> f64 {
        1.0 - self.alpha
    }

    /// True when the chain is positive recurrent and the analytic results apply.
    pub fn is_analytic(&self) -> bool {
        self.alpha > 0.0 && self.alpha < 0.5
    }
}

/// How far back an uncle may sit from the block that references it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReferenceLimit {
    Limited(u32),
    Unlimited,
}

impl ReferenceLimit {
    #[inline]
    pub fn allows(self, distance: u32) -> bool {
        distance >= 1
            && match self {
                ReferenceLimit::Limited(max) => distance <= max,
                ReferenceLimit::Unlimited => true,
            }
    }
}

impl fmt::Display for ReferenceLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceLimit::Limited(d) => write!(f, "{d}"),
            ReferenceLimit::Unlimited => f.write_str("unlimited"),
        }
    }
}

impl Default for ReferenceLimit {
    fn default() -> Self {
        ReferenceLimit::Limited(ETHEREUM_MAX_REFERENCE_DISTANCE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UncleReward {
    /// `(8 - d) / 8` for `1 <= d <= 6`.
    Ethereum,
    /// The same value at every distance within the reference limit.
    Fixed(Reward),
}

/// Static, uncle and nephew rewards as functions of the reference distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RewardSchedule {
    pub uncle: UncleReward,
    pub nephew: Reward,
    pub max_reference_distance: ReferenceLimit,
}

impl RewardSchedule {
    /// Byzantium rules: `K_u(d) = (8 - d)/8`, `K_n = 1/32`, references up to distance 6.
    pub fn ethereum() -> Self {
        RewardSchedule {
            uncle: UncleReward::Ethereum,
            nephew: Ratio::new(1, 32),
            max_reference_distance: ReferenceLimit::default(),
        }
    }

    /// Fixed uncle reward with Ethereum's nephew reward and cutoff.
    pub fn fixed(value: Reward) -> Self {
        RewardSchedule { uncle: UncleReward::Fixed(value), ..Self::ethereum() }
    }

    /// Fixed uncle reward paid at any distance.
    pub fn fixed_unlimited(value: Reward) -> Self {
        RewardSchedule { max_reference_distance: ReferenceLimit::Unlimited, ..Self::fixed(value) }
    }

    /// Static rewards only. Stale blocks are never referenced.
    pub fn bitcoin() -> Self {
        RewardSchedule {
            uncle: UncleReward::Fixed(Reward::zero()),
            nephew: Reward::zero(),
            max_reference_distance: ReferenceLimit::Limited(0),
        }
    }

    pub fn static_reward(&self) -> Reward {
        STATIC_REWARD
    }

    /// Whether an uncle at `distance` can be referenced at all.
    pub fn references(&self, distance: u32) -> bool {
        self.max_reference_distance.allows(distance)
    }

    pub fn uncle_reward(&self, distance: u32) -> Reward {
        if !self.references(distance) {
            return Reward::zero();
        }
        match self.uncle {
            UncleReward::Ethereum => ethereum_uncle_reward(distance),
            UncleReward::Fixed(v) => v,
        }
    }

    pub fn nephew_reward(&self, distance: u32) -> Reward {
        if self.references(distance) {
            self.nephew
        } else {
            Reward::zero()
        }
    }

    pub fn uncle_reward_f64(&self, distance: u32) -> f64 {
        to_f64(self.uncle_reward(distance))
    }

    pub fn nephew_reward_f64(&self, distance: u32) -> f64 {
        to_f64(self.nephew_reward(distance))
    }

    /// Largest uncle plus nephew reward payable for one reference.
    pub fn max_reference_reward(&self) -> f64 {
        let uncle = match self.uncle {
            UncleReward::Ethereum => ethereum_uncle_reward(1),
            UncleReward::Fixed(v) => v,
        };
        to_f64(uncle) + to_f64(self.nephew)
    }

    /// Short label used in CSV output, e.g. `ethereum`, `fixed-1/2`, `bitcoin`.
    pub fn tag(&self) -> String {
        if *self == Self::bitcoin() {
            return "bitcoin".to_string();
        }
        let mut tag = match self.uncle {
            UncleReward::Ethereum => "ethereum".to_string(),
            UncleReward::Fixed(v) => format!("fixed-{}", RewardValue(v)),
        };
        if self.nephew != Ratio::new(1, 32) {
            tag.push_str(&format!("-kn{}", RewardValue(self.nephew)));
        }
        if self.max_reference_distance != ReferenceLimit::default() {
            tag.push_str(&format!("-d{}", self.max_reference_distance));
        }
        tag
    }
}

impl Default for RewardSchedule {
    fn default() -> Self {
        Self::ethereum()
    }
}

impl FromStr for RewardSchedule {
    type Err = ModelError;

    /// Parses `ethereum`, `bitcoin`, `fixed:<value>` and `fixed-unlimited:<value>`,
    /// where `<value>` is a fraction such as `4/8` or a decimal.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "ethereum" => return Ok(Self::ethereum()),
            "bitcoin" => return Ok(Self::bitcoin()),
            _ => {}
        }
        if let Some(v) = s.strip_prefix("fixed-unlimited:") {
            return Ok(Self::fixed_unlimited(v.parse::<RewardValue>()?.0));
        }
        if let Some(v) = s.strip_prefix("fixed:") {
            return Ok(Self::fixed(v.parse::<RewardValue>()?.0));
        }
        Err(ModelError::UnknownSchedule(s.to_string()))
    }
}

#[inline]
pub(crate) fn to_f64(r: Reward) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// The Markov state: private-branch length `l_s` and public-branch length `l_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChainState {
    pub l_s: u32,
    pub l_h: u32,
}

impl ChainState {
    pub const ORIGIN: ChainState = ChainState { l_s: 0, l_h: 0 };

    pub const fn new(l_s: u32, l_h: u32) -> Self {
        ChainState { l_s, l_h }
    }

    /// `(0,0)`, `(1,0)`, `(1,1)` and every `(i,j)` with `i - j >= 2`.
    pub fn is_reachable(&self) -> bool {
        matches!((self.l_s, self.l_h), (0, 0) | (1, 0) | (1, 1)) || self.l_s >= self.l_h + 2
    }

    /// Advantage of the private branch, `l_s - l_h` (negative never occurs in reachable states).
    pub fn lead(&self) -> i64 {
        i64::from(self.l_s) - i64::from(self.l_h)
    }
}

impl fmt::Display for ChainState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.l_s, self.l_h)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigViolation {
    #[error("alpha out of range: {0} not in (0, 1)")]
    AlphaOutOfRange(f64),
    #[error("gamma out of range: {0} not in [0, 1]")]
    GammaOutOfRange(f64),
    #[error("negative {kind} reward: {value}")]
    NegativeReward { kind: &'static str, value: String },
    #[error("{kind} reward {value} exceeds the static reward")]
    RewardExceedsStatic { kind: &'static str, value: String },
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {}", join_violations(.0))]
    Invalid(Vec<ConfigViolation>),
    #[error("unknown reward schedule `{0}`")]
    UnknownSchedule(String),
    #[error("cannot parse reward value `{0}`")]
    BadReward(String),
    #[error("config file: {0}")]
    Parse(String),
}

fn join_violations(v: &[ConfigViolation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A configuration whose every invariant has been checked.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidatedConfig {
    pub config: MiningConfig,
    pub schedule: RewardSchedule,
}

/// Checks every invariant and reports all violations at once.
pub fn validate_config(
    config: MiningConfig,
    schedule: RewardSchedule,
) -> Result<ValidatedConfig, Vec<ConfigViolation>> {
    let mut errors = Vec::new();
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        errors.push(ConfigViolation::AlphaOutOfRange(config.alpha));
    }
    if !(0.0..=1.0).contains(&config.gamma) {
        errors.push(ConfigViolation::GammaOutOfRange(config.gamma));
    }
    let mut check = |kind: &'static str, value: Reward| {
        if value < Reward::zero() {
            errors.push(ConfigViolation::NegativeReward { kind, value: RewardValue(value).to_string() });
        } else if value > STATIC_REWARD {
            errors.push(ConfigViolation::RewardExceedsStatic { kind, value: RewardValue(value).to_string() });
        }
    };
    if let UncleReward::Fixed(v) = schedule.uncle {
        check("uncle", v);
    }
    check("nephew", schedule.nephew);
    if errors.is_empty() {
        Ok(ValidatedConfig { config, schedule })
    } else {
        Err(errors)
    }
}

/// Reward amount that serializes as an exact fraction (`"7/8"`) and also
/// accepts plain numbers on input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RewardValue(pub Reward);

impl fmt::Display for RewardValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self.0.denom() == 1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for RewardValue {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::BadReward(s.to_string());
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let d: i64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            return Ok(RewardValue(Ratio::new(n, d)));
        }
        if let Ok(n) = t.parse::<i64>() {
            return Ok(RewardValue(Ratio::from_integer(n)));
        }
        let x: f64 = t.parse().map_err(|_| bad())?;
        Ratio::approximate_float(x).map(RewardValue).ok_or_else(bad)
    }
}

impl Serialize for RewardValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for RewardValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(RewardValue(Ratio::from_integer(n))),
            Raw::Float(x) => x.to_string().parse(),
            Raw::Text(t) => t.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncleRewardMode {
    Ethereum,
    Fixed,
}

fn default_nephew() -> RewardValue {
    RewardValue(Ratio::new(1, 32))
}

fn default_limit() -> ReferenceLimitValue {
    ReferenceLimitValue(ReferenceLimit::default())
}

/// `max_reference_distance` in a config file: an integer or `"unlimited"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceLimitValue(pub ReferenceLimit);

impl Serialize for ReferenceLimitValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            ReferenceLimit::Limited(d) => s.serialize_u32(d),
            ReferenceLimit::Unlimited => s.serialize_str("unlimited"),
        }
    }
}

impl<'de> Deserialize<'de> for ReferenceLimitValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(ReferenceLimitValue(ReferenceLimit::Limited(n))),
            Raw::Text(t) if t == "unlimited" => Ok(ReferenceLimitValue(ReferenceLimit::Unlimited)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "max_reference_distance must be an integer or \"unlimited\", got `{t}`"
            ))),
        }
    }
}

/// On-disk configuration (TOML).
///
/// ```toml
/// alpha = 0.3
/// gamma = 0.5
/// uncle_reward_mode = "fixed"
/// fixed_uncle_value = "4/8"
/// nephew_value = "1/32"
/// max_reference_distance = 6
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_mode")]
    pub uncle_reward_mode: UncleRewardMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_uncle_value: Option<RewardValue>,
    #[serde(default = "default_nephew")]
    pub nephew_value: RewardValue,
    #[serde(default = "default_limit")]
    pub max_reference_distance: ReferenceLimitValue,
}

fn default_gamma() -> f64 {
    0.5
}

fn default_mode() -> UncleRewardMode {
    UncleRewardMode::Ethereum
}

impl ConfigFile {
    pub fn from_parts(config: MiningConfig, schedule: RewardSchedule) -> Self {
        let (mode, fixed) = match schedule.uncle {
            UncleReward::Ethereum => (UncleRewardMode::Ethereum, None),
            UncleReward::Fixed(v) => (UncleRewardMode::Fixed, Some(RewardValue(v))),
        };
        ConfigFile {
            alpha: config.alpha,
            gamma: config.gamma,
            uncle_reward_mode: mode,
            fixed_uncle_value: fixed,
            nephew_value: RewardValue(schedule.nephew),
            max_reference_distance: ReferenceLimitValue(schedule.max_reference_distance),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Splits into validated parts.
    pub fn resolve(&self) -> Result<ValidatedConfig, ModelError> {
        let uncle = match (self.uncle_reward_mode, self.fixed_uncle_value) {
            (UncleRewardMode::Ethereum, _) => UncleReward::Ethereum,
            (UncleRewardMode::Fixed, Some(v)) => UncleReward::Fixed(v.0),
            (UncleRewardMode::Fixed, None) => {
                return Err(ModelError::Parse("uncle_reward_mode = \"fixed\" requires fixed_uncle_value".into()))
            }
        };
        let schedule = RewardSchedule {
            uncle,
            nephew: self.nephew_value.0,
            max_reference_distance: self.max_reference_distance.0,
        };
        validate_config(MiningConfig::new(self.alpha, self.gamma), schedule).map_err(ModelError::Invalid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ethereum_uncle_reward_values() {
        assert_eq!(ethereum_uncle_reward(1), Ratio::new(7, 8));
        assert_eq!(ethereum_uncle_reward(2), Ratio::new(6, 8));
        assert_eq!(ethereum_uncle_reward(6), Ratio::new(2, 8));
        assert_eq!(ethereum_uncle_reward(7), Reward::zero());
        assert_eq!(ethereum_uncle_reward(0), Reward::zero());
    }

    #[test]
    fn fixed_uncle_reward_values() {
        let half = Ratio::new(4, 8);
        let six = ReferenceLimit::default();
        assert_eq!(fixed_uncle_reward(half, 3, six), Ratio::new(1, 2));
        assert_eq!(fixed_uncle_reward(half, 7, six), Reward::zero());
        assert_eq!(fixed_uncle_reward(Ratio::new(7, 8), 1, six), Ratio::new(7, 8));
        assert_eq!(fixed_uncle_reward(half, 40, ReferenceLimit::Unlimited), half);
    }

    #[test]
    fn nephew_cut_off_with_references() {
        let s = RewardSchedule::ethereum();
        assert_eq!(s.nephew_reward(6), Ratio::new(1, 32));
        assert_eq!(s.nephew_reward(7), Reward::zero());
        let b = RewardSchedule::bitcoin();
        assert_eq!(b.uncle_reward(1), Reward::zero());
        assert_eq!(b.nephew_reward(1), Reward::zero());
        assert!(!b.references(1));
    }

    #[test]
    fn validation_reports_every_violation() {
        let eth = RewardSchedule::ethereum();
        assert!(validate_config(MiningConfig::new(0.3, 0.5), eth).is_ok());

        let errs = validate_config(MiningConfig::new(1.2, 0.5), eth).unwrap_err();
        assert_eq!(errs, vec![ConfigViolation::AlphaOutOfRange(1.2)]);
        assert!(errs[0].to_string().contains("alpha out of range"));

        let errs = validate_config(MiningConfig::new(0.3, -0.1), eth).unwrap_err();
        assert!(errs[0].to_string().contains("gamma out of range"));

        let bad = RewardSchedule { uncle: UncleReward::Fixed(Ratio::new(9, 8)), nephew: Ratio::new(-1, 32), ..eth };
        let errs = validate_config(MiningConfig::new(0.0, 2.0), bad).unwrap_err();
        assert_eq!(errs.len(), 4);
    }

    #[test]
    fn schedule_parsing_and_tags() {
        assert_eq!("ethereum".parse::<RewardSchedule>().unwrap().tag(), "ethereum");
        assert_eq!("bitcoin".parse::<RewardSchedule>().unwrap().tag(), "bitcoin");
        assert_eq!("fixed:4/8".parse::<RewardSchedule>().unwrap().tag(), "fixed-1/2");
        assert_eq!("fixed-unlimited:0.875".parse::<RewardSchedule>().unwrap().tag(), "fixed-7/8-dunlimited");
        assert!("gas".parse::<RewardSchedule>().is_err());
    }

    #[test]
    fn config_file_accepts_numbers_and_fractions() {
        let c = ConfigFile::parse(
            "alpha = 0.3\ngamma = 0.5\nuncle_reward_mode = \"fixed\"\nfixed_uncle_value = 0.5\n\
             nephew_value = \"1/32\"\nmax_reference_distance = \"unlimited\"\n",
        )
        .unwrap();
        let v = c.resolve().unwrap();
        assert_eq!(v.schedule, RewardSchedule::fixed_unlimited(Ratio::new(1, 2)));
        assert!(ConfigFile::parse("alpha = 0.3\nbogus = 1\n").is_err());
    }

    #[test]
    fn chain_state_reachability() {
        for (s, ok) in
            [((0, 0), true), ((1, 0), true), ((1, 1), true), ((2, 1), false), ((3, 1), true), ((0, 1), false)]
        {
            assert_eq!(ChainState::new(s.0, s.1).is_reachable(), ok, "{s:?}");
        }
    }

    fn arb_schedule() -> impl Strategy<Value = RewardSchedule> {
        (
            prop_oneof![Just(UncleReward::Ethereum), (0i64..=8).prop_map(|n| UncleReward::Fixed(Ratio::new(n, 8)))],
            0i64..=32,
            prop_oneof![(0u32..12).prop_map(ReferenceLimit::Limited), Just(ReferenceLimit::Unlimited)],
        )
            .prop_map(|(uncle, n, lim)| RewardSchedule {
                uncle,
                nephew: Ratio::new(n, 32),
                max_reference_distance: lim,
            })
    }

    proptest! {
        #[test]
        fn config_file_round_trips(alpha in 0.001f64..0.999, gamma in 0.0f64..=1.0, schedule in arb_schedule()) {
            let file = ConfigFile::from_parts(MiningConfig::new(alpha, gamma), schedule);
            let back = ConfigFile::parse(&file.to_toml()).unwrap();
            prop_assert_eq!(&back, &file);
            let v = back.resolve().unwrap();
            prop_assert_eq!(v.schedule, schedule);
        }

        #[test]
        fn ethereum_uncle_reward_non_increasing(d in 1u32..50) {
            prop_assert!(ethereum_uncle_reward(d + 1) <= ethereum_uncle_reward(d));
            if d > 6 { prop_assert_eq!(ethereum_uncle_reward(d), Reward::zero()); }
        }

        #[test]
        fn rewards_bounded_by_static(schedule in arb_schedule(), d in 0u32..40) {
            for r in [schedule.uncle_reward(d), schedule.nephew_reward(d)] {
                prop_assert!(r >= Reward::zero() && r <= STATIC_REWARD);
            }
        }

        #[test]
        fn beta_complements_alpha(alpha in 0.0f64..1.0) {
            let c = MiningConfig::new(alpha, 0.5);
            prop_assert_eq!(c.alpha + c.beta(), 1.0);
        }
    }
}
