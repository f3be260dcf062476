//! Unsigned Stirling numbers of the first kind, stored as logarithms.

use crate::error::{NbpError, Result};

pub const DEFAULT_MAX_M: usize = 1000;

/// Lower-triangular table of `ln |s(m, l)|` for `0 <= l <= m <= max_m`.
///
/// Zero entries are stored as `f64::NEG_INFINITY`. Built from
/// `|s(m+1, l)| = m |s(m, l)| + |s(m, l-1)|` with log-sum-exp, so no entry
/// ever leaves the representable range.
#[derive(Debug, Clone)]
pub struct StirlingTable {
    max_m: usize,
    log_s: Vec<f64>,
}

#[inline]
fn row_start(m: usize) -> usize {
    m * (m + 1) / 2
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl StirlingTable {
    pub fn new(max_m: usize) -> Self {
        let mut log_s = vec![f64::NEG_INFINITY; row_start(max_m + 1)];
        log_s[0] = 0.0;
        for m in 0..max_m {
            let (prev, next) = log_s.split_at_mut(row_start(m + 1));
            let prev = &prev[row_start(m)..];
            let ln_m = (m as f64).ln();
            for l in 0..=m + 1 {
                let stay = if l <= m { prev[l] + ln_m } else { f64::NEG_INFINITY };
                let grow = if l >= 1 { prev[l - 1] } else { f64::NEG_INFINITY };
                next[l] = log_add_exp(stay, grow);
            }
        }
        StirlingTable { max_m, log_s }
    }

    pub fn max_m(&self) -> usize {
        self.max_m
    }

    /// `ln |s(m, l)|`; negative infinity when `l > m` or `l = 0 < m`.
    pub fn ln_abs(&self, m: usize, l: usize) -> Result<f64> {
        if m > self.max_m {
            return Err(NbpError::Index(format!(
                "Stirling table holds m <= {}, asked for m = {m}",
                self.max_m
            )));
        }
        if l > m {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.log_s[row_start(m) + l])
    }

    /// Row `m` as a slice of length `m + 1`.
    pub fn row(&self, m: usize) -> Result<&[f64]> {
        if m > self.max_m {
            return Err(NbpError::Index(format!(
                "Stirling table holds m <= {}, asked for m = {m}",
                self.max_m
            )));
        }
        Ok(&self.log_s[row_start(m)..row_start(m + 1)])
    }
}

impl Default for StirlingTable {
    fn default() -> Self {
        StirlingTable::new(DEFAULT_MAX_M)
    }
}
