//! Scalar distribution kernels for the negative binomial family.
//!
//! PMFs work in log space. Samplers take an explicit [`RngStream`] and are
//! pure functions of their arguments and the stream position.

mod rng;
mod stirling;

pub use rng::{RngState, RngStream, StreamName};
pub use stirling::{StirlingTable, DEFAULT_MAX_M};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
pub use statrs::function::gamma::ln_gamma;

use crate::error::{NbpError, Result};

/// Probabilities are clamped into `[P_MIN, 1 - P_MIN]` before any `ln(1 - p)`.
pub const P_MIN: f64 = 1e-12;

/// Clamp a probability away from 0 and 1. The flag reports whether the input
/// was moved.
pub fn clamp_prob(p: f64) -> (f64, bool) {
    if p < P_MIN {
        (P_MIN, true)
    } else if p > 1.0 - P_MIN {
        (1.0 - P_MIN, true)
    } else {
        (p, false)
    }
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(NbpError::domain(format!("{what}: probability must be in (0, 1), got {p}")))
    }
}

fn check_positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(NbpError::domain(format!("{what}: expected a positive finite value, got {x}")))
    }
}

#[inline]
fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

// ---------------------------------------------------------------------------
// PMFs

/// `ln NB(m; r, p) = ln[Γ(r+m) / (m! Γ(r)) (1-p)^r p^m]`.
pub fn nb_log_pmf(m: u64, r: f64, p: f64) -> Result<f64> {
    check_positive(r, "nb_log_pmf r")?;
    check_prob(p, "nb_log_pmf p")?;
    let mf = m as f64;
    Ok(ln_gamma(r + mf) - ln_factorial(m) - ln_gamma(r) + r * (-p).ln_1p() + mf * p.ln())
}

/// Poisson log-PMF. `lambda = 0` puts all mass at zero.
pub fn poisson_log_pmf(k: u64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(NbpError::domain(format!("poisson rate must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(if k == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    Ok(k as f64 * lambda.ln() - lambda - ln_factorial(k))
}

/// Logarithmic distribution, `P(k) = -p^k / (k ln(1-p))` for `k >= 1`.
pub fn log_series_log_pmf(k: u64, p: f64) -> Result<f64> {
    check_prob(p, "log_series_log_pmf p")?;
    if k == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(k as f64 * p.ln() - (k as f64).ln() - (-(-p).ln_1p()).ln())
}

/// Sum of `l` i.i.d. logarithmic variables:
/// `P(m) = p^m l! |s(m,l)| / (m! [-ln(1-p)]^l)`.
pub fn sumlog_log_pmf(m: u64, l: u64, p: f64, table: &StirlingTable) -> Result<f64> {
    check_prob(p, "sumlog_log_pmf p")?;
    if l == 0 {
        return Ok(if m == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if m < l {
        return Ok(f64::NEG_INFINITY);
    }
    let s = table.ln_abs(m as usize, l as usize)?;
    Ok(m as f64 * p.ln() + ln_factorial(l) + s
        - ln_factorial(m)
        - l as f64 * (-(-p).ln_1p()).ln())
}

/// Chinese restaurant table distribution:
/// `P(l | m, r) = Γ(r) / Γ(m+r) |s(m,l)| r^l`.
pub fn crt_log_pmf(l: u64, m: u64, r: f64, table: &StirlingTable) -> Result<f64> {
    check_positive(r, "crt_log_pmf r")?;
    let s = table.ln_abs(m as usize, l as usize)?;
    if s == f64::NEG_INFINITY {
        return Ok(s);
    }
    Ok(ln_gamma(r) - ln_gamma(m as f64 + r) + s + l as f64 * r.ln())
}

/// Poisson-logarithmic bivariate distribution:
/// `P(m, l | r, p) = |s(m,l)| r^l / m! (1-p)^r p^m`.
pub fn poislog_log_pmf(m: u64, l: u64, r: f64, p: f64, table: &StirlingTable) -> Result<f64> {
    check_positive(r, "poislog_log_pmf r")?;
    check_prob(p, "poislog_log_pmf p")?;
    let s = table.ln_abs(m as usize, l as usize)?;
    if s == f64::NEG_INFINITY {
        return Ok(s);
    }
    Ok(s + l as f64 * r.ln() - ln_factorial(m) + r * (-p).ln_1p() + m as f64 * p.ln())
}

// ---------------------------------------------------------------------------
// Continuous samplers

/// Unit-scale gamma draw, no argument checks.
///
/// Marsaglia-Tsang squeeze for `shape >= 1`. For `shape < 1` draw
/// `G ~ Gamma(shape + 1)` and `U ~ U(0,1)` and return `G U^(1/shape)`,
/// evaluated in log space. Results that underflow are returned as
/// `f64::MIN_POSITIVE` so they stay usable as gamma shapes downstream.
pub(crate) fn gamma_unit(shape: f64, rng: &mut RngStream) -> f64 {
    if shape < 1.0 {
        let g = gamma_unit(shape + 1.0, rng);
        let u = rng.open01();
        let x = (g.ln() + u.ln() / shape).exp();
        return x.max(f64::MIN_POSITIVE);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = StandardNormal.sample(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.open01();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Gamma draw with the given shape and scale (mean `shape * scale`).
pub fn sample_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> Result<f64> {
    check_positive(shape, "gamma shape")?;
    check_positive(scale, "gamma scale")?;
    Ok((gamma_unit(shape, rng) * scale).max(f64::MIN_POSITIVE))
}

/// Beta draw as `X / (X + Y)` with independent unit gammas.
pub fn sample_beta(a: f64, b: f64, rng: &mut RngStream) -> Result<f64> {
    check_positive(a, "beta a")?;
    check_positive(b, "beta b")?;
    Ok(beta_unchecked(a, b, rng))
}

pub(crate) fn beta_unchecked(a: f64, b: f64, rng: &mut RngStream) -> f64 {
    let x = gamma_unit(a, rng);
    let y = gamma_unit(b, rng);
    x / (x + y)
}

/// Dirichlet draw by normalizing independent gammas.
pub fn sample_dirichlet(alpha: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(NbpError::domain("dirichlet needs at least one component"));
    }
    for &a in alpha {
        check_positive(a, "dirichlet alpha")?;
    }
    let mut out = vec![0.0; alpha.len()];
    dirichlet_into(alpha.iter().copied(), &mut out, rng);
    Ok(out)
}

/// Fill `out` with a Dirichlet draw. `alpha` must yield `out.len()` positive
/// values.
pub(crate) fn dirichlet_into(
    alpha: impl Iterator<Item = f64>,
    out: &mut [f64],
    rng: &mut RngStream,
) {
    let mut total = 0.0;
    for (o, a) in out.iter_mut().zip(alpha) {
        *o = gamma_unit(a, rng);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

// ---------------------------------------------------------------------------
// Discrete samplers

/// Index drawn with probability proportional to `weights`.
///
/// A single uniform is scaled by the total and compared against the running
/// sum. If rounding leaves the target past the final sum, the last index with
/// positive weight is returned.
pub fn sample_categorical(weights: &[f64], rng: &mut RngStream) -> Result<usize> {
    let mut total = 0.0;
    for &w in weights {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(NbpError::domain(format!("categorical weight {w} is not a finite nonnegative value")));
        }
        total += w;
    }
    if !(total > 0.0) {
        return Err(NbpError::domain("categorical weights sum to zero"));
    }
    Ok(categorical_with_total(weights, total, rng.uniform()))
}

#[inline]
pub(crate) fn categorical_with_total(weights: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if w > 0.0 {
            if target < acc {
                return i;
            }
            last_positive = i;
        }
    }
    last_positive
}

/// Precomputed cumulative weights for repeated draws from one categorical.
#[derive(Debug, Clone)]
pub struct CategoricalTable {
    cumulative: Vec<f64>,
}

impl CategoricalTable {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(NbpError::domain(format!("categorical weight {w} is not a finite nonnegative value")));
            }
            acc += w;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(NbpError::domain("categorical weights sum to zero"));
        }
        Ok(CategoricalTable { cumulative })
    }

    pub fn sample(&self, rng: &mut RngStream) -> usize {
        let total = *self.cumulative.last().unwrap();
        let target = rng.uniform() * total;
        let i = self.cumulative.partition_point(|&c| c <= target);
        if i < self.cumulative.len() {
            return i;
        }
        // rounding: last index whose weight is positive
        let mut j = self.cumulative.len() - 1;
        while j > 0 && self.cumulative[j] == self.cumulative[j - 1] {
            j -= 1;
        }
        j
    }
}

pub fn sample_bernoulli(p: f64, rng: &mut RngStream) -> bool {
    rng.uniform() < p
}

/// Poisson draw; a zero rate returns zero.
pub fn sample_poisson(lambda: f64, rng: &mut RngStream) -> Result<u64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(NbpError::domain(format!("poisson rate must be >= 0, got {lambda}")));
    }
    Ok(poisson_unchecked(lambda, rng))
}

pub(crate) fn poisson_unchecked(lambda: f64, rng: &mut RngStream) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    match rand_distr::Poisson::new(lambda) {
        Ok(d) => {
            let x: f64 = d.sample(rng);
            x as u64
        }
        // above rand_distr's supported range a normal approximation is exact
        // to far better than f64 resolution of the count itself
        Err(_) => {
            let z: f64 = StandardNormal.sample(rng);
            (lambda + z * lambda.sqrt()).round().max(0.0) as u64
        }
    }
}

/// NB draw through the gamma-Poisson mixture:
/// `λ ~ Gamma(r, p/(1-p))`, `m ~ Pois(λ)`.
pub fn sample_nb(r: f64, p: f64, rng: &mut RngStream) -> Result<u64> {
    check_positive(r, "nb r")?;
    check_prob(p, "nb p")?;
    let lambda = gamma_unit(r, rng) * p / (1.0 - p);
    Ok(poisson_unchecked(lambda, rng))
}

/// Multinomial counts for `n` trials.
pub fn sample_multinomial(n: u64, weights: &[f64], rng: &mut RngStream) -> Result<Vec<u64>> {
    let table = CategoricalTable::new(weights)?;
    let mut out = vec![0u64; weights.len()];
    for _ in 0..n {
        out[table.sample(rng)] += 1;
    }
    Ok(out)
}

/// Chinese restaurant table count: `l = Σ_{n=1}^{m} Bernoulli(r / (n - 1 + r))`.
pub fn sample_crt(m: u64, r: f64, rng: &mut RngStream) -> Result<u64> {
    check_positive(r, "crt r")?;
    Ok(crt_unchecked(m, r, rng))
}

#[inline]
pub(crate) fn crt_unchecked(m: u64, r: f64, rng: &mut RngStream) -> u64 {
    let mut l = 0;
    for n in 0..m {
        if rng.uniform() * (n as f64 + r) < r {
            l += 1;
        }
    }
    l
}

/// Largest number of cumulative terms a [`LogSampler`] keeps.
const LOG_CDF_CAP: usize = 4096;

/// Inverse-CDF sampler for the logarithmic distribution with a lazily
/// extended cumulative table. Reuse one instance for many draws at the same
/// `p`.
///
/// Uniforms landing beyond the cached table (only possible for `p` very close
/// to one) are served by rejection from Kemp's two-uniform generator,
/// restricted to the uncached tail.
#[derive(Debug, Clone)]
pub struct LogSampler {
    p: f64,
    ln_1mp: f64,
    norm: f64,
    power: f64,
    cdf: Vec<f64>,
    saturated: bool,
}

impl LogSampler {
    pub fn new(p: f64) -> Result<Self> {
        check_prob(p, "logarithmic p")?;
        let ln_1mp = (-p).ln_1p();
        Ok(LogSampler {
            p,
            ln_1mp,
            norm: -1.0 / ln_1mp,
            power: 1.0,
            cdf: Vec::new(),
            saturated: false,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sample(&mut self, rng: &mut RngStream) -> u64 {
        let u = rng.uniform();
        let i = self.cdf.partition_point(|&c| c <= u);
        if i < self.cdf.len() {
            return i as u64 + 1;
        }
        if self.saturated {
            return self.cdf.len() as u64;
        }
        let mut last = self.cdf.last().copied().unwrap_or(0.0);
        while self.cdf.len() < LOG_CDF_CAP {
            let k = self.cdf.len() as f64 + 1.0;
            self.power *= self.p;
            let term = self.power * self.norm / k;
            let next = last + term;
            self.cdf.push(next);
            if u < next {
                return self.cdf.len() as u64;
            }
            if next == last || term < f64::EPSILON * 1e-3 {
                // remaining tail is below double resolution
                self.saturated = true;
                return self.cdf.len() as u64;
            }
            last = next;
        }
        loop {
            let k = self.kemp(rng);
            if k > LOG_CDF_CAP as u64 {
                return k;
            }
        }
    }

    fn kemp(&self, rng: &mut RngStream) -> u64 {
        loop {
            let v = rng.open01();
            if v >= self.p {
                return 1;
            }
            let u = rng.open01();
            let q = -(self.ln_1mp * u).exp_m1();
            if v <= q * q {
                let k = (1.0 + v.ln() / q.ln()).floor();
                if k >= 1.0 && k.is_finite() {
                    return k as u64;
                }
                continue;
            }
            return if v >= q { 1 } else { 2 };
        }
    }
}

/// One logarithmic draw. Builds a throwaway [`LogSampler`]; prefer keeping a
/// sampler around for repeated draws.
pub fn sample_log(p: f64, rng: &mut RngStream) -> Result<u64> {
    Ok(LogSampler::new(p)?.sample(rng))
}

/// Sum of `l` i.i.d. logarithmic draws.
pub fn sample_sumlog(l: u64, p: f64, rng: &mut RngStream) -> Result<u64> {
    let mut sampler = LogSampler::new(p)?;
    Ok((0..l).map(|_| sampler.sample(rng)).sum())
}

/// Convenience: uniform integer in `0..n`.
pub(crate) fn uniform_index(n: usize, rng: &mut RngStream) -> usize {
    rng.random_range(0..n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> RngStream {
        RngStream::new(2024, 0)
    }

    #[test]
    fn nb_pmf_trivial_cases() {
        let v = nb_log_pmf(0, 2.5, 0.3).unwrap();
        assert!((v - 2.5 * 0.7f64.ln()).abs() < 1e-13);
        let v = nb_log_pmf(2, 1.0, 0.5).unwrap();
        assert!((v - 0.125f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn nb_pmf_matches_product_form() {
        // Γ(r+m)/Γ(r) = Π_{i<m} (r+i)
        let (m, r, p) = (7u64, 3.2, 0.6);
        let mut rising = 1.0;
        let mut fact = 1.0;
        for i in 0..m {
            rising *= r + i as f64;
            fact *= (i + 1) as f64;
        }
        let expect = rising / fact * (1.0f64 - p).powf(r) * p.powi(m as i32);
        let got = nb_log_pmf(m, r, p).unwrap().exp();
        assert!(((got - expect) / expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn nb_pmf_rejects_bad_params() {
        assert!(nb_log_pmf(1, 0.0, 0.5).is_err());
        assert!(nb_log_pmf(1, -1.0, 0.5).is_err());
        assert!(nb_log_pmf(1, 1.0, 0.0).is_err());
        assert!(nb_log_pmf(1, 1.0, 1.0).is_err());
    }

    #[test]
    fn nb_pmf_normalizes() {
        let total: f64 = (0..2000).map(|m| nb_log_pmf(m, 3.0, 0.4).unwrap().exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_series_first_mass() {
        let v = log_series_log_pmf(1, 0.5).unwrap().exp();
        assert!((v - 0.5 / 2f64.ln()).abs() < 1e-14);
        assert!((v - 0.72135).abs() < 1e-5);
        assert!(log_series_log_pmf(1, 1e-10).unwrap().exp() > 1.0 - 1e-9);
    }

    #[test]
    fn crt_pmf_small_case_matches_enumeration() {
        // Enumerate the sequential Bernoulli seating for m = 3, r = 1:
        // customer n opens a new table with probability r/(n-1+r).
        let r = 1.0;
        let mut dist = [0.0f64; 4];
        for mask in 0..8u32 {
            let mut prob = 1.0;
            let mut tables = 0;
            for n in 0..3 {
                let q = r / (n as f64 + r);
                if mask >> n & 1 == 1 {
                    prob *= q;
                    tables += 1;
                } else {
                    prob *= 1.0 - q;
                }
            }
            dist[tables] += prob;
        }
        let t = StirlingTable::new(10);
        for l in 0..=3u64 {
            let got = crt_log_pmf(l, 3, r, &t).unwrap().exp();
            assert!((got - dist[l as usize]).abs() < 1e-14);
        }
        assert!((dist[1] - 2.0 / 6.0).abs() < 1e-15);
        assert!((dist[2] - 3.0 / 6.0).abs() < 1e-15);
        assert!((dist[3] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn crt_pmf_all_tables_and_normalization() {
        let t = StirlingTable::new(200);
        for &r in &[0.05, 1.0, 7.5] {
            for &m in &[1u64, 5, 60, 200] {
                let top = crt_log_pmf(m, m, r, &t).unwrap();
                let expect = ln_gamma(r) - ln_gamma(m as f64 + r) + m as f64 * r.ln();
                assert!((top - expect).abs() < 1e-10);
                let s: f64 = (0..=m).map(|l| crt_log_pmf(l, m, r, &t).unwrap().exp()).sum();
                assert!((s - 1.0).abs() < 1e-9, "m={m} r={r} sum={s}");
            }
        }
        assert!(matches!(crt_log_pmf(1, 201, 1.0, &t), Err(NbpError::Index(_))));
    }

    #[test]
    fn poislog_examples() {
        let t = StirlingTable::new(20);
        let v = poislog_log_pmf(2, 1, 1.0, 0.5, &t).unwrap().exp();
        assert!((v - 0.0625).abs() < 1e-14);
        let crt = crt_log_pmf(1, 2, 1.0, &t).unwrap().exp();
        let nb = nb_log_pmf(2, 1.0, 0.5).unwrap().exp();
        assert!((crt - 0.5).abs() < 1e-13 && (nb - 0.125).abs() < 1e-13);
        let v0 = poislog_log_pmf(0, 0, 2.3, 0.4, &t).unwrap();
        assert!((v0 - 2.3 * 0.6f64.ln()).abs() < 1e-14);
        let a = poislog_log_pmf(3, 2, 2.0, 0.3, &t).unwrap();
        let b = sumlog_log_pmf(3, 2, 0.3, &t).unwrap()
            + poisson_log_pmf(2, -2.0 * 0.7f64.ln()).unwrap();
        assert!(((a.exp() - b.exp()) / a.exp()).abs() < 1e-10);
    }

    #[test]
    fn sumlog_single_summand_is_logarithmic() {
        let t = StirlingTable::new(30);
        for m in 1..30 {
            let a = sumlog_log_pmf(m, 1, 0.35, &t).unwrap();
            let b = log_series_log_pmf(m, 0.35).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(sumlog_log_pmf(0, 0, 0.5, &t).unwrap(), 0.0);
        assert_eq!(sumlog_log_pmf(3, 0, 0.5, &t).unwrap(), f64::NEG_INFINITY);
        assert_eq!(sumlog_log_pmf(2, 3, 0.5, &t).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn crt_sampler_edge_cases() {
        let mut g = rng();
        assert_eq!(sample_crt(0, 5.0, &mut g).unwrap(), 0);
        for _ in 0..1000 {
            assert_eq!(sample_crt(1, 2.5, &mut g).unwrap(), 1);
            let l = sample_crt(9, 0.3, &mut g).unwrap();
            assert!((1..=9).contains(&l));
        }
        assert!(sample_crt(3, 0.0, &mut g).is_err());
    }

    #[test]
    fn crt_sampler_mean() {
        let mut g = rng();
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_crt(2, 1.0, &mut g).unwrap() as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        // l - 1 ~ Bernoulli(1/2): sd 0.5
        let se = 0.5 / (n as f64).sqrt();
        assert!((mean - 1.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn categorical_degenerate_mass() {
        let mut g = rng();
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[0.0, 5.0, 0.0], &mut g).unwrap(), 1);
        }
        assert!(sample_categorical(&[0.0, 0.0], &mut g).is_err());
        assert!(sample_categorical(&[1.0, -1.0], &mut g).is_err());
    }

    #[test]
    fn categorical_rounding_returns_last_positive() {
        assert_eq!(categorical_with_total(&[1.0, 2.0, 0.0], 3.0, 1.0), 1);
        assert_eq!(categorical_with_total(&[1.0, 2.0, 0.0], 3.0, 0.0), 0);
    }

    #[test]
    fn categorical_table_agrees_with_linear_scan() {
        let w = [0.0, 0.3, 0.0, 1.2, 0.5, 0.0];
        let t = CategoricalTable::new(&w).unwrap();
        let mut a = rng();
        let mut b = rng();
        for _ in 0..5000 {
            assert_eq!(t.sample(&mut a), sample_categorical(&w, &mut b).unwrap());
        }
    }

    #[test]
    fn dirichlet_on_simplex() {
        let mut g = rng();
        for _ in 0..100 {
            let x = sample_dirichlet(&[0.05; 40], &mut g).unwrap();
            assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(x.iter().all(|&v| v >= 0.0));
        }
        assert!(sample_dirichlet(&[1.0, 0.0], &mut g).is_err());
    }

    #[test]
    fn gamma_small_shape_mean() {
        let mut g = rng();
        let n = 1_000_000;
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            let x = sample_gamma(0.01, 1.0, &mut g).unwrap();
            s += x;
            s2 += x * x;
        }
        let mean = s / n as f64;
        // population sd = sqrt(shape)
        let se = 0.1 / (n as f64).sqrt();
        assert!((mean - 0.01).abs() < 3.0 * se, "mean {mean}, se {se}");
        let _ = s2;
    }

    #[test]
    fn gamma_and_beta_moments() {
        let mut g = rng();
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_gamma(3.5, 2.0, &mut g).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 7.0).abs() < 4.0 * (14.0f64 / n as f64).sqrt());
        assert!((var - 14.0).abs() < 0.3);
        let bs: Vec<f64> = (0..n).map(|_| sample_beta(2.0, 5.0, &mut g).unwrap()).collect();
        let bm = bs.iter().sum::<f64>() / n as f64;
        assert!((bm - 2.0 / 7.0).abs() < 0.002);
        assert!(sample_gamma(0.0, 1.0, &mut g).is_err());
        assert!(sample_beta(1.0, -2.0, &mut g).is_err());
    }

    #[test]
    fn poisson_zero_rate_and_mean() {
        let mut g = rng();
        assert_eq!(sample_poisson(0.0, &mut g).unwrap(), 0);
        assert!(sample_poisson(-1.0, &mut g).is_err());
        let n = 100_000;
        let m = (0..n).map(|_| sample_poisson(4.2, &mut g).unwrap()).sum::<u64>() as f64 / n as f64;
        assert!((m - 4.2).abs() < 4.0 * (4.2f64 / n as f64).sqrt());
    }

    #[test]
    fn nb_sampler_moments() {
        let mut g = rng();
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_nb(3.0, 0.4, &mut g).unwrap() as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let true_var = 10.0 / 3.0;
        assert!((mean - 2.0).abs() < 3.0 * (true_var / n as f64).sqrt(), "mean {mean}");
        // sd of the sample variance: sqrt((μ4 - σ^4)/n); NB(3, .4) has μ4 = 530/9
        let se_var = ((530.0 / 9.0 - true_var * true_var) / n as f64).sqrt();
        assert!((var - true_var).abs() < 3.0 * se_var, "var {var}");
    }

    #[test]
    fn log_sampler_basic_support() {
        let mut g = rng();
        let mut s = LogSampler::new(0.3).unwrap();
        for _ in 0..10_000 {
            assert!(s.sample(&mut g) >= 1);
        }
        let mut tiny = LogSampler::new(1e-9).unwrap();
        assert!((0..1000).all(|_| tiny.sample(&mut g) == 1));
        assert!(LogSampler::new(1.0).is_err());
    }

    #[test]
    fn log_sampler_near_one_uses_tail() {
        let mut g = rng();
        let p = 1.0 - 1e-6;
        let mut s = LogSampler::new(p).unwrap();
        let n = 20_000;
        let mean = (0..n).map(|_| s.sample(&mut g) as f64).sum::<f64>() / n as f64;
        // E[k] = -p / ((1-p) ln(1-p)) ≈ 72_382
        let expect = -p / ((1.0 - p) * (-p).ln_1p());
        assert!((mean / expect - 1.0).abs() < 0.1, "mean {mean} vs {expect}");
    }

    #[test]
    fn sumlog_support() {
        let mut g = rng();
        assert_eq!(sample_sumlog(0, 0.5, &mut g).unwrap(), 0);
        for _ in 0..1000 {
            assert!(sample_sumlog(4, 0.5, &mut g).unwrap() >= 4);
        }
    }

    #[test]
    fn samplers_are_deterministic() {
        let draw = |seed| {
            let mut g = RngStream::new(seed, 9);
            (
                sample_gamma(0.3, 1.0, &mut g).unwrap(),
                sample_nb(2.0, 0.7, &mut g).unwrap(),
                sample_crt(20, 1.5, &mut g).unwrap(),
                sample_log(0.8, &mut g).unwrap(),
            )
        };
        assert_eq!(draw(5), draw(5));
    }
}
