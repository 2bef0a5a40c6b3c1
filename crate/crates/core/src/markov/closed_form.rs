use crate::model::MiningConfig;

use super::{check_analytic, MarkovError, MultisumTable, SolveMethod, StateIndex, StationaryDistribution};

/// Stationary distribution from the explicit product-and-multisum formulas.
pub fn stationary_closed_form(config: &MiningConfig, truncation: u32) -> Result<StationaryDistribution, MarkovError> {
    check_analytic(config)?;
    if truncation < 2 {
        return Err(MarkovError::TruncationTooSmall { got: truncation, min: 2 });
    }
    let n = truncation as usize;
    let (a, b, g) = (config.alpha, config.beta(), config.gamma);
    let powers = |x: f64| {
        let mut v = Vec::with_capacity(n + 1);
        let mut p = 1.0;
        for _ in 0..=n {
            v.push(p);
            p *= x;
        }
        v
    };
    let ap = powers(a);
    let bp = powers(b);
    let bi = powers(1.0 / b);
    let cp = powers(1.0 - g);
    let table = MultisumTable::new(truncation);

    let pi00 = (1.0 - 2.0 * a) / (2.0 * a * a * a - 4.0 * a * a + 1.0);
    let index = StateIndex::new(truncation);
    let mut pi = Vec::with_capacity(index.len());
    for s in index.states() {
        let (i, j) = (s.l_s as usize, s.l_h as usize);
        let v = match (i, j) {
            (_, 0) => ap[i],
            (1, 1) => a - a * a,
            _ => {
                let (ii, jj) = (i as i64, j as i64);
                let first = ap[i] * bp[j] * cp[j] * table.f(ii, jj, jj);
                let second = ap[i - j] * g * cp[j - 1] * (bi[i - j - 1] - 1.0);
                let third: f64 = (1..=j).map(|k| ap[i - k] * bp[j - k] * table.f(ii, jj, jj - k as i64)).sum();
                first + second - g * cp[j - 1] * third
            }
        };
        pi.push(v * pi00);
    }
    Ok(StationaryDistribution::new(*config, SolveMethod::Closed, index, pi))
}
