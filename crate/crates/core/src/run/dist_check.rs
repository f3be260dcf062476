//! Self-checks of the distribution kernels: exact identities between the PMFs
//! and Monte Carlo agreement between samplers and PMFs.

use serde::Serialize;

use crate::distributions::{
    crt_log_pmf, gamma_unit, log_series_log_pmf, nb_log_pmf, poislog_log_pmf, poisson_log_pmf,
    poisson_unchecked, sample_crt, sample_multinomial, sample_nb, sumlog_log_pmf, LogSampler,
    RngStream, StirlingTable, StreamName,
};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    /// Largest discrepancy observed (relative error, abs error or TV).
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistCheckReport {
    pub seed: u64,
    pub draws: u64,
    pub suites: Vec<SuiteResult>,
}

impl DistCheckReport {
    pub fn all_passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

fn suite(name: &str, statistic: f64, threshold: f64, detail: String) -> SuiteResult {
    SuiteResult {
        name: name.to_string(),
        statistic,
        threshold,
        passed: statistic < threshold,
        detail,
    }
}

/// Histogram of `n` draws; values at or beyond `cap` land in the last bin.
fn histogram(n: u64, cap: usize, mut draw: impl FnMut() -> Result<u64>) -> Result<Vec<u64>> {
    let mut h = vec![0u64; cap + 1];
    for _ in 0..n {
        h[(draw()? as usize).min(cap)] += 1;
    }
    Ok(h)
}

/// Total variation between a histogram and a PMF on `0..pmf.len()`; mass
/// outside that range on either side counts in full.
fn tv(hist: &[u64], pmf: &[f64]) -> f64 {
    let n: u64 = hist.iter().sum();
    let mut d = 0.0;
    for (i, &p) in pmf.iter().enumerate() {
        d += (hist.get(i).copied().unwrap_or(0) as f64 / n as f64 - p).abs();
    }
    let outside: u64 = hist.iter().skip(pmf.len()).sum();
    (d + outside as f64 / n as f64 + (1.0 - pmf.iter().sum::<f64>()).max(0.0)) / 2.0
}

fn max_abs(hist: &[u64], pmf: &[f64]) -> f64 {
    let n: u64 = hist.iter().sum();
    pmf.iter()
        .enumerate()
        .map(|(i, &p)| (hist.get(i).copied().unwrap_or(0) as f64 / n as f64 - p).abs())
        .fold(0.0, f64::max)
}

fn pmf_vec(len: usize, f: impl Fn(u64) -> Result<f64>) -> Result<Vec<f64>> {
    (0..len as u64).map(|x| f(x).map(f64::exp)).collect()
}

/// Run every suite with `draws` Monte Carlo draws per check.
pub fn dist_check(seed: u64, draws: u64) -> Result<DistCheckReport> {
    let mut rng = RngStream::named(seed, StreamName::DistCheck);
    let table = StirlingTable::new(64);
    let mut suites = Vec::new();

    // PoisLog: direct joint vs CRT x NB vs SumLog x Poisson
    let mut worst: f64 = 0.0;
    for &r in &[0.1, 1.0, 5.0] {
        for &p in &[0.1f64, 0.5, 0.9] {
            let lambda = -r * (-p).ln_1p();
            for m in 0..=15u64 {
                for l in 0..=m {
                    if m > 0 && l == 0 {
                        continue; // zero probability in all three forms
                    }
                    let direct = poislog_log_pmf(m, l, r, p, &table)?;
                    let crt_nb = crt_log_pmf(l, m, r, &table)? + nb_log_pmf(m, r, p)?;
                    let sumlog_pois = sumlog_log_pmf(m, l, p, &table)? + poisson_log_pmf(l, lambda)?;
                    for other in [crt_nb, sumlog_pois] {
                        worst = worst.max(((other - direct).exp() - 1.0).abs());
                    }
                }
            }
        }
    }
    suites.push(suite(
        "poislog-factorizations",
        worst,
        1e-10,
        "m <= 15, r in {0.1, 1, 5}, p in {0.1, 0.5, 0.9}; max relative error".into(),
    ));

    // samplers against PMFs
    let h = histogram(draws, 11, || sample_crt(10, 2.0, &mut rng))?;
    let pmf = pmf_vec(11, |l| crt_log_pmf(l, 10, 2.0, &table))?;
    suites.push(suite("crt-sampler", max_abs(&h, &pmf), 0.01, "CRT(10, 2), max abs error".into()));

    let mut log = LogSampler::new(0.3)?;
    let h = histogram(draws, 60, || Ok(log.sample(&mut rng)))?;
    let pmf = pmf_vec(60, |k| if k == 0 { Ok(f64::NEG_INFINITY) } else { log_series_log_pmf(k, 0.3) })?;
    suites.push(suite("log-sampler", max_abs(&h, &pmf), 0.01, "Log(0.3), max abs error".into()));

    let nb_pmf = pmf_vec(51, |m| nb_log_pmf(m, 3.0, 0.4))?;
    let h = histogram(draws, 51, || sample_nb(3.0, 0.4, &mut rng))?;
    suites.push(suite("nb-sampler", tv(&h, &nb_pmf), 0.01, "NB(3, 0.4), TV over 0..=50".into()));

    // compound Poisson: Σ_{t<l} Log(p), l ~ Pois(-r ln(1-p))
    let (r, p) = (3.0, 0.4);
    let mut log = LogSampler::new(p)?;
    let h = histogram(draws, 51, || {
        let l = poisson_unchecked(-r * (-p).ln_1p(), &mut rng);
        Ok((0..l).map(|_| log.sample(&mut rng)).sum())
    })?;
    suites.push(suite("compound-poisson", tv(&h, &nb_pmf), 0.01, "sum of Log(0.4) vs NB(3, 0.4)".into()));

    // gamma-Poisson mixture
    let h = histogram(draws, 51, || {
        let lambda = gamma_unit(r, &mut rng) * p / (1.0 - p);
        Ok(poisson_unchecked(lambda, &mut rng))
    })?;
    suites.push(suite("gamma-poisson", tv(&h, &nb_pmf), 0.01, "Pois(Gamma(3, 2/3)) vs NB(3, 0.4)".into()));

    // marginalizing r ~ Gamma(r1, 1/c1) out of (m, l) ~ PoisLog(r, p)
    let (r1, c1, p): (f64, f64, f64) = (2.0, 1.0, 0.5);
    let q = -(-p).ln_1p();
    let p_prime = q / (c1 + q);
    let h = histogram(draws, 60, || {
        let r = gamma_unit(r1, &mut rng) / c1;
        let m = sample_nb(r, p, &mut rng)?;
        sample_crt(m, r, &mut rng)
    })?;
    let pmf = pmf_vec(60, |l| nb_log_pmf(l, r1, p_prime))?;
    suites.push(suite(
        "gamma-nb-marginal",
        tv(&h, &pmf),
        0.01,
        format!("CRT tables vs NB(2, p' = {p_prime:.6})"),
    ));

    // independent Poissons vs Poisson total + multinomial
    let theta = [1.5, 0.7, 2.2];
    let total: f64 = theta.iter().sum();
    let cap = 20;
    let mut direct = vec![vec![0u64; cap + 1]; 3];
    let mut split = vec![vec![0u64; cap + 1]; 3];
    for _ in 0..draws {
        for (k, &t) in theta.iter().enumerate() {
            direct[k][(poisson_unchecked(t, &mut rng) as usize).min(cap)] += 1;
        }
        let n = poisson_unchecked(total, &mut rng);
        let counts = sample_multinomial(n, &theta, &mut rng)?;
        for k in 0..3 {
            split[k][(counts[k] as usize).min(cap)] += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        let a: Vec<f64> = direct[k].iter().map(|&c| c as f64 / draws as f64).collect();
        let d: f64 = split[k].iter().zip(&a).map(|(&c, &x)| (c as f64 / draws as f64 - x).abs()).sum();
        worst = worst.max(d / 2.0);
    }
    suites.push(suite(
        "poisson-multinomial",
        worst,
        0.02,
        "theta = (1.5, 0.7, 2.2); per-atom TV".into(),
    ));

    Ok(DistCheckReport { seed, draws, suites })
}
