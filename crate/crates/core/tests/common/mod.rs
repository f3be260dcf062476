#![allow(dead_code)]

use nbp::distributions::{RngStream, StreamName};
use nbp::gibbs::{draw_data, draw_prior, sweep, Hyperparams, ModelState, TokenData, Variant};

/// Hyperparameters for joint-distribution tests: informative enough that
/// documents hold a handful of tokens (`E[N_j] ≈ 8` for gamma-NB).
pub fn geweke_hyperparams(k: usize) -> Hyperparams {
    Hyperparams {
        a0: 6.0,
        b0: 4.0,
        e0: 8.0,
        f0: 2.0,
        c: 1.0,
        eta: 0.5,
        k,
        beta_c: 2.0,
        beta_mass: 0.5,
        lda_alpha: 2.0,
    }
}

/// Scalar summaries of the joint state monitored by the test.
pub fn statistics(s: &ModelState) -> Vec<(&'static str, f64)> {
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let v = s.variant;
    let mut out = vec![
        ("tokens", s.doc_len.iter().sum::<u64>() as f64),
        ("active", s.active_topics() as f64),
        ("sum_theta", s.theta.iter().sum::<f64>()),
        ("phi_00", s.phi[0]),
    ];
    if v.uses_gamma0() {
        out.push(("gamma0", s.gamma0));
    }
    if v.has_atom_dispersion() {
        out.push(("sum_r_k", s.r_atom.iter().sum()));
    }
    if v.has_group_dispersion() {
        out.push(("sum_r_j", s.r_group.iter().sum()));
    }
    if v.has_group_probability() {
        out.push(("mean_p_j", mean(&s.p_group)));
    }
    if v.has_atom_probability() {
        out.push(("mean_p_k", mean(&s.p_atom)));
    }
    if v == Variant::Nb {
        out.push(("p", s.p_shared));
    }
    if v == Variant::NbFtm {
        out.push(("sum_pi", s.pi.iter().sum()));
        out.push(("sum_b", s.b.iter().filter(|&&b| b).count() as f64));
    }
    out
}

pub struct GewekeOutcome {
    pub names: Vec<&'static str>,
    pub z: Vec<f64>,
}

impl GewekeOutcome {
    pub fn max_abs_z(&self) -> f64 {
        self.z.iter().fold(0.0f64, |a, z| a.max(z.abs()))
    }

    pub fn describe(&self) -> String {
        self.names
            .iter()
            .zip(&self.z)
            .map(|(n, z)| format!("{n}={z:+.2}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Compare the marginal-conditional simulator (independent prior + data
/// draws) against the successive-conditional one (sweep, then redraw the
/// data). Means are compared with a z statistic; the chain side uses batch
/// means to absorb autocorrelation.
pub fn geweke(
    variant: Variant,
    hp: &Hyperparams,
    num_terms: usize,
    doc_len: &[u64],
    rounds: usize,
    seed: u64,
) -> GewekeOutcome {
    let mut rng = RngStream::named(seed, StreamName::Simulation);
    let mut forward: Vec<Vec<f64>> = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let mut s = draw_prior(variant, hp, num_terms, doc_len, &mut rng).unwrap();
        draw_data(&mut s, &mut rng).unwrap();
        forward.push(statistics(&s).into_iter().map(|(_, x)| x).collect());
    }

    let mut rng = RngStream::named(seed, StreamName::Chain(0));
    let mut s = draw_prior(variant, hp, num_terms, doc_len, &mut rng).unwrap();
    let mut data: TokenData = draw_data(&mut s, &mut rng).unwrap();
    let names: Vec<&'static str> = statistics(&s).into_iter().map(|(n, _)| n).collect();
    let mut chain: Vec<Vec<f64>> = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        sweep(&mut s, &data, hp, &mut rng).unwrap();
        data = draw_data(&mut s, &mut rng).unwrap();
        chain.push(statistics(&s).into_iter().map(|(_, x)| x).collect());
    }

    let batches = 50;
    let per = rounds / batches;
    let z = (0..names.len())
        .map(|i| {
            let f: Vec<f64> = forward.iter().map(|r| r[i]).collect();
            let g: Vec<f64> = chain.iter().map(|r| r[i]).collect();
            let (mf, vf) = mean_var(&f);
            let bm: Vec<f64> = g.chunks_exact(per).map(|c| c.iter().sum::<f64>() / per as f64).collect();
            let (mg, vb) = mean_var(&bm);
            let se = (vf / f.len() as f64 + vb / bm.len() as f64).sqrt();
            if se == 0.0 {
                if mf == mg {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (mf - mg) / se
            }
        })
        .collect();
    GewekeOutcome { names, z }
}

pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Total variation distance between an empirical histogram and a PMF given
/// on the same support (mass outside the support is counted as error).
pub fn tv_distance(counts: &[u64], pmf: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let mut tv = 0.0;
    let mut covered = 0.0;
    for (i, &p) in pmf.iter().enumerate() {
        let c = counts.get(i).copied().unwrap_or(0) as f64 / n as f64;
        tv += (c - p).abs();
        covered += p;
    }
    let outside: u64 = counts.iter().skip(pmf.len()).sum();
    tv += outside as f64 / n as f64 + (1.0 - covered).max(0.0);
    tv / 2.0
}
