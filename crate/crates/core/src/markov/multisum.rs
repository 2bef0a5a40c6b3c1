//! The nested multisum `f(x, y, z)` appearing in the closed-form solution.
//!
//! `f(x, y, z)` counts index chains `s_1 <= s_2 <= ... <= s_z <= x` with
//! `s_k >= y - z + 2 + k`. Shifting indices shows it depends only on `z`
//! and `x - y + z`: writing
//! `G(0, X) = 1` and `G(z, X) = sum_{s = z + 2}^{X} G(z - 1, s)`, we get
//! `f(x, y, z) = G(z, x - y + z)`.

use num_bigint::BigUint;
use num_traits::{One, Zero};

/// Exact `f(x, y, z)`; zero when `z <= 0` or `x < y + 2`.
pub fn multisum_f(x: i64, y: i64, z: i64) -> BigUint {
    if z <= 0 || x < y + 2 {
        return BigUint::zero();
    }
    let z = z as usize;
    let top = (x - y) as usize + z;
    // row[X] = G(level, X) for X in 0..=top
    let mut row = vec![BigUint::one(); top + 1];
    for level in 1..=z {
        let mut next = vec![BigUint::zero(); top + 1];
        let mut acc = BigUint::zero();
        for s in 0..=top {
            if s >= level + 2 {
                acc += &row[s];
            }
            next[s] = acc.clone();
        }
        row = next;
    }
    row[top].clone()
}

/// `f64` table of `G(z, X)` for `z, X <= max`, enough for every `f` the
/// closed form needs at truncation `max`.
#[derive(Debug, Clone)]
pub struct MultisumTable {
    max: usize,
    g: Vec<f64>,
}

impl MultisumTable {
    pub fn new(max: u32) -> Self {
        let max = max as usize;
        let w = max + 1;
        let mut g = vec![0.0; w * w];
        g[..w].fill(1.0);
        for z in 1..=max {
            let mut acc = 0.0;
            for x in 0..=max {
                if x >= z + 2 {
                    acc += g[(z - 1) * w + x];
                }
                g[z * w + x] = acc;
            }
        }
        MultisumTable { max, g }
    }

    /// `f(x, y, z)`; panics if `x - y + z` exceeds the table size.
    #[inline]
    pub fn f(&self, x: i64, y: i64, z: i64) -> f64 {
        if z <= 0 || x < y + 2 {
            return 0.0;
        }
        let big = (x - y + z) as usize;
        assert!(big <= self.max && z as usize <= self.max, "multisum table too small");
        self.g[z as usize * (self.max + 1) + big]
    }
}
