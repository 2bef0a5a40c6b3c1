use crate::model::MiningConfig;

use super::{check_analytic, transition_rates, MarkovError, SolveMethod, StateIndex, StationaryDistribution};

#[derive(Debug, Clone, Copy)]
pub struct NumericOptions {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for NumericOptions {
    fn default() -> Self {
        NumericOptions { tolerance: 1e-13, max_sweeps: 20_000 }
    }
}

/// Gauss-Seidel on the truncated balance equations.
///
/// A pool block out of the last retained column would leave the state space;
/// it is folded back as a self-loop so the truncated chain stays stochastic.
/// Stops once every balance residual of the truncated chain is within the
/// tolerance.
pub fn stationary_numeric(
    config: &MiningConfig,
    truncation: u32,
    options: NumericOptions,
) -> Result<StationaryDistribution, MarkovError> {
    check_analytic(config)?;
    if truncation < 4 {
        return Err(MarkovError::TruncationTooSmall { got: truncation, min: 4 });
    }
    let index = StateIndex::new(truncation);
    let len = index.len();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); len];
    let mut self_rate = vec![0.0; len];
    for (k, s) in index.states().enumerate() {
        for tr in transition_rates(s, config)? {
            let to = index.index(tr.to).unwrap_or(k);
            if to == k {
                self_rate[k] += tr.rate;
            } else {
                incoming[to].push((k, tr.rate));
            }
        }
    }

    let mut pi: Vec<f64> = index.states().map(|s| config.alpha.powi(s.l_s as i32)).collect();
    normalize(&mut pi);
    let mut residual = f64::INFINITY;
    for sweep in 1..=options.max_sweeps {
        for k in 0..len {
            let inflow: f64 = incoming[k].iter().map(|&(t, q)| pi[t] * q).sum();
            pi[k] = inflow / (1.0 - self_rate[k]);
        }
        normalize(&mut pi);
        residual = (0..len)
            .map(|k| {
                let inflow: f64 = incoming[k].iter().map(|&(t, q)| pi[t] * q).sum();
                (inflow + self_rate[k] * pi[k] - pi[k]).abs()
            })
            .fold(0.0, f64::max);
        if residual <= options.tolerance {
            return Ok(StationaryDistribution::new(*config, SolveMethod::Numeric, index, pi));
        }
        if sweep == options.max_sweeps {
            break;
        }
    }
    Err(MarkovError::NotConverged { sweeps: options.max_sweeps, residual })
}

fn normalize(pi: &mut [f64]) {
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
}
