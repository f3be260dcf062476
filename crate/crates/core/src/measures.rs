//! Truncated completely random measures, the NB process draw, and synthetic
//! corpora for every model variant.
//!
//! A measure on the topic simplex is represented by `K` atoms with base mass
//! `γ0/K` each; atoms are drawn from `Dir(η, ..., η)`.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::SparseCountMatrix;
use crate::distributions::{
    beta_unchecked, clamp_prob, dirichlet_into, gamma_unit, poisson_unchecked,
    LogSampler, RngStream, StreamName,
};
use crate::error::{NbpError, Result};
use crate::gibbs::{draw_data, Hyperparams, ModelState, TokenData, Variant};

/// Base distribution of the atoms: a symmetric Dirichlet on the `V`-simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseMeasure {
    pub num_terms: usize,
    pub eta: f64,
}

impl BaseMeasure {
    fn validate(&self) -> Result<()> {
        if self.num_terms == 0 {
            return Err(NbpError::Domain("base measure needs at least one term".into()));
        }
        domain_check(self.eta > 0.0 && self.eta.is_finite(), || format!("eta = {}", self.eta))
    }

    pub fn draw_atom(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut atom = vec![0.0; self.num_terms];
        dirichlet_into(std::iter::repeat_n(self.eta, self.num_terms), &mut atom, rng);
        atom
    }
}

/// `K` weighted atoms. Weights are positive for gamma-type measures and in
/// `(0, 1)` for beta-type ones; marked processes carry a second weight per
/// atom in `marks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedMeasure {
    pub weights: Vec<f64>,
    pub marks: Option<Vec<f64>>,
    pub atoms: Vec<Vec<f64>>,
}

impl TruncatedMeasure {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `G(Ω) = Σ_k w_k`.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn domain_check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(NbpError::domain(msg()))
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    domain_check(x > 0.0 && x.is_finite(), || format!("{name} = {x}"))
}

fn draw_atoms(k: usize, base: &BaseMeasure, rng: &mut RngStream) -> Vec<Vec<f64>> {
    (0..k).map(|_| base.draw_atom(rng)).collect()
}

/// Gamma process `Γ(G0, 1/c)` with `G0 = Σ_k (γ0/K) δ_{ω_k}`: `r_k ~
/// Gamma(γ0/K, 1/c)`, so `G(Ω) ~ Gamma(γ0, 1/c)`.
pub fn draw_gamma_process(
    gamma0: f64,
    c: f64,
    k: usize,
    base: &BaseMeasure,
    rng: &mut RngStream,
) -> Result<TruncatedMeasure> {
    check_positive("gamma0", gamma0)?;
    check_positive("c", c)?;
    if k == 0 {
        return Err(NbpError::Domain("K must be at least 1".into()));
    }
    base.validate()?;
    let weights = (0..k)
        .map(|_| (gamma_unit(gamma0 / k as f64, rng) / c).max(f64::MIN_POSITIVE))
        .collect();
    Ok(TruncatedMeasure {
        weights,
        marks: None,
        atoms: draw_atoms(k, base, rng),
    })
}

/// Beta process with concentration `c` and mass `γ0`: `p_k ~ Beta(cγ0/K,
/// c(1 - γ0/K))`, so `E[Σ_k p_k] = γ0`. Requires `γ0 < K`.
pub fn draw_beta_process(
    gamma0: f64,
    c: f64,
    k: usize,
    base: &BaseMeasure,
    rng: &mut RngStream,
) -> Result<TruncatedMeasure> {
    let weights = beta_weights(gamma0, c, k, rng)?;
    base.validate()?;
    Ok(TruncatedMeasure {
        weights,
        marks: None,
        atoms: draw_atoms(k, base, rng),
    })
}

fn beta_weights(gamma0: f64, c: f64, k: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    check_positive("gamma0", gamma0)?;
    check_positive("c", c)?;
    if k == 0 {
        return Err(NbpError::Domain("K must be at least 1".into()));
    }
    let frac = gamma0 / k as f64;
    domain_check(frac < 1.0, || format!("gamma0 = {gamma0} must be below K = {k}"))?;
    Ok((0..k)
        .map(|_| clamp_prob(beta_unchecked(c * frac, c * (1.0 - frac), rng)).0)
        .collect())
}

/// Marked beta process: beta-process probabilities `p_k` as weights, each
/// atom marked with a dispersion `r_k ~ Gamma(mark_mass/K, 1/mark_rate)`.
pub fn draw_marked_beta_process(
    gamma0: f64,
    c: f64,
    mark_mass: f64,
    mark_rate: f64,
    k: usize,
    base: &BaseMeasure,
    rng: &mut RngStream,
) -> Result<TruncatedMeasure> {
    let weights = beta_weights(gamma0, c, k, rng)?;
    check_positive("mark_mass", mark_mass)?;
    check_positive("mark_rate", mark_rate)?;
    base.validate()?;
    let marks = (0..k)
        .map(|_| (gamma_unit(mark_mass / k as f64, rng) / mark_rate).max(f64::MIN_POSITIVE))
        .collect();
    Ok(TruncatedMeasure {
        weights,
        marks: Some(marks),
        atoms: draw_atoms(k, base, rng),
    })
}

/// One draw `X ~ NBP(G0, p)` with a continuous base of mass `γ0`: `K⁺ ~
/// Pois(-γ0 ln(1-p))` distinct atoms, each with a `Log(p)` count. The total
/// count is `NB(γ0, p)`.
pub fn draw_nb_process(
    gamma0: f64,
    p: f64,
    base: &BaseMeasure,
    rng: &mut RngStream,
) -> Result<Vec<(Vec<f64>, u64)>> {
    check_positive("gamma0", gamma0)?;
    domain_check(p > 0.0 && p < 1.0, || format!("p = {p} outside (0, 1)"))?;
    base.validate()?;
    let k_plus = poisson_unchecked(-gamma0 * (-p).ln_1p(), rng);
    if k_plus == 0 {
        return Ok(Vec::new());
    }
    let mut log = LogSampler::new(p)?;
    Ok((0..k_plus)
        .map(|_| {
            let n = log.sample(rng);
            (base.draw_atom(rng), n)
        })
        .collect())
}

/// Generating parameters of a synthetic corpus.
///
/// Dispersions are drawn `Gamma(dispersion_shape, dispersion_scale)` and
/// probabilities `Beta(prob_a, prob_b)`; the NB odds (or, for variants with a
/// pinned `p`, the dispersions) are then rescaled so that the expected
/// document length is `mean_doc_len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub variant: Variant,
    pub num_topics: usize,
    pub num_terms: usize,
    pub num_docs: usize,
    pub mean_doc_len: f64,
    /// Dirichlet concentration of the true topics.
    pub topic_eta: f64,
    pub dispersion_shape: f64,
    pub dispersion_scale: f64,
    pub prob_a: f64,
    pub prob_b: f64,
    /// Beta prior of the zero-inflation probabilities `π_k`.
    pub pi_a: f64,
    pub pi_b: f64,
    /// Total concentration of `θ_j` for the Dirichlet baseline.
    pub lda_alpha: f64,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            variant: Variant::MarkedBetaNb,
            num_topics: 5,
            num_terms: 50,
            num_docs: 100,
            mean_doc_len: 100.0,
            topic_eta: 0.1,
            dispersion_shape: 2.0,
            dispersion_scale: 0.25,
            prob_a: 2.0,
            prob_b: 2.0,
            pi_a: 4.0,
            pi_b: 2.0,
            lda_alpha: 1.0,
            seed: 1,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [
            ("num_topics", self.num_topics),
            ("num_terms", self.num_terms),
            ("num_docs", self.num_docs),
        ] {
            if n == 0 {
                return Err(NbpError::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, x) in [
            ("mean_doc_len", self.mean_doc_len),
            ("topic_eta", self.topic_eta),
            ("dispersion_shape", self.dispersion_shape),
            ("dispersion_scale", self.dispersion_scale),
            ("prob_a", self.prob_a),
            ("prob_b", self.prob_b),
            ("pi_a", self.pi_a),
            ("pi_b", self.pi_b),
            ("lda_alpha", self.lda_alpha),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(NbpError::Config(format!("{name} must be positive, got {x}")));
            }
        }
        Ok(())
    }
}

/// A generated corpus and the state that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub counts: SparseCountMatrix,
    pub truth: ModelState,
    pub spec: SimulationSpec,
}

impl SyntheticCorpus {
    /// Truth summary: variant, seed, topics (`K x V`) and the live weights.
    pub fn truth_json(&self) -> serde_json::Value {
        let t = &self.truth;
        let v = t.variant;
        let topics: Vec<Vec<f64>> = (0..t.num_topics).map(|k| t.topic(k)).collect();
        let mut weights = serde_json::Map::new();
        if v.has_atom_dispersion() {
            weights.insert("r_k".into(), json!(t.r_atom));
        }
        if v.has_group_dispersion() {
            weights.insert("r_j".into(), json!(t.r_group));
        }
        if v.has_atom_probability() {
            weights.insert("p_k".into(), json!(t.p_atom));
        }
        if matches!(v, Variant::GammaNb | Variant::NbLda | Variant::NbHdp | Variant::NbFtm) {
            weights.insert("p_j".into(), json!(t.p_group));
        }
        if v == Variant::NbFtm {
            weights.insert("pi_k".into(), json!(t.pi));
        }
        json!({
            "variant": v,
            "seed": self.spec.seed,
            "spec": self.spec,
            "topics": topics,
            "weights": weights,
            "topic_token_counts": t.n_k,
        })
    }
}

/// Draw a corpus from `spec.variant`'s generative model: variant-specific
/// `(r, p, π)`, then `θ_jk`, `n_jk ~ Pois(θ_jk)` and each token's term from
/// `φ_k`. All randomness comes from the simulation stream of `spec.seed`.
pub fn simulate_corpus(spec: &SimulationSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = RngStream::named(spec.seed, StreamName::Simulation);
    let (k, jn) = (spec.num_topics, spec.num_docs);
    let hp = Hyperparams {
        k,
        eta: spec.topic_eta,
        lda_alpha: spec.lda_alpha,
        ..Hyperparams::default()
    };
    let empty = TokenData::from_doc_terms(spec.num_terms, &vec![Vec::new(); jn])?;
    let mut s = ModelState::empty(spec.variant, &hp, &empty);
    s.pinned = false;

    let base = BaseMeasure {
        num_terms: spec.num_terms,
        eta: spec.topic_eta,
    };
    for kk in 0..k {
        let atom = base.draw_atom(&mut rng);
        for (v, x) in atom.iter().enumerate() {
            s.phi[v * k + kk] = *x;
        }
    }

    let disp = |rng: &mut RngStream| {
        (gamma_unit(spec.dispersion_shape, rng) * spec.dispersion_scale).max(f64::MIN_POSITIVE)
    };
    let prob = |rng: &mut RngStream| clamp_prob(beta_unchecked(spec.prob_a, spec.prob_b, rng)).0;
    let v = spec.variant;
    for r in s.r_atom.iter_mut() {
        *r = if v == Variant::BetaGeometric { 1.0 } else { disp(&mut rng) };
    }
    for r in s.r_group.iter_mut() {
        *r = disp(&mut rng);
    }
    if v.has_atom_probability() {
        s.p_atom.iter_mut().for_each(|p| *p = prob(&mut rng));
    }
    if v.has_group_probability() {
        s.p_group.iter_mut().for_each(|p| *p = prob(&mut rng));
    }
    if v == Variant::Nb {
        s.p_shared = prob(&mut rng);
    }
    if v == Variant::NbFtm {
        for pi in s.pi.iter_mut() {
            *pi = clamp_prob(beta_unchecked(spec.pi_a, spec.pi_b, &mut rng)).0;
        }
        for j in 0..jn {
            for kk in 0..k {
                s.b[j * k + kk] = rng.uniform() < s.pi[kk];
            }
        }
    }
    calibrate_length(&mut s, spec.mean_doc_len);

    for j in 0..jn {
        if v == Variant::DirPfa {
            let a = spec.lda_alpha / k as f64;
            dirichlet_into(std::iter::repeat_n(a, k), &mut s.theta[j * k..(j + 1) * k], &mut rng);
            s.doc_len[j] = poisson_unchecked(spec.mean_doc_len, &mut rng);
            continue;
        }
        for kk in 0..k {
            let idx = j * k + kk;
            let (shape, p) = theta_prior(&s, j, kk);
            s.theta[idx] = if v == Variant::Nb {
                s.r_atom[kk]
            } else if !s.b[idx] {
                0.0
            } else {
                (gamma_unit(shape, &mut rng) * p / (1.0 - p)).max(f64::MIN_POSITIVE)
            };
        }
    }
    let data = draw_data(&mut s, &mut rng)?;
    Ok(SyntheticCorpus {
        counts: data.to_matrix(),
        truth: s,
        spec: spec.clone(),
    })
}

/// Shape and probability of the gamma prior on `θ_jk`.
fn theta_prior(s: &ModelState, j: usize, k: usize) -> (f64, f64) {
    match s.variant {
        Variant::Nb => (s.r_atom[k], s.p_shared),
        Variant::NbLda => (s.r_group[j], s.p_group[j]),
        Variant::GammaNb | Variant::NbHdp | Variant::NbFtm => (s.r_atom[k], s.p_group[j]),
        Variant::BetaGeometric => (1.0, s.p_atom[k]),
        Variant::BetaNb => (s.r_group[j], s.p_atom[k]),
        Variant::MarkedBetaNb => (s.r_atom[k], s.p_atom[k]),
        Variant::DirPfa => (1.0, 0.5),
    }
}

/// Rescale so the average over documents of `E[N_j] = Σ_k E[θ_jk]` equals
/// `target`. Free probabilities have their odds scaled; where `p` is pinned
/// (or absent) the dispersions are scaled instead.
fn calibrate_length(s: &mut ModelState, target: f64) {
    let (k, jn) = (s.num_topics, s.num_docs);
    let v = s.variant;
    if v == Variant::DirPfa {
        return;
    }
    let mut expected = 0.0;
    for j in 0..jn {
        for kk in 0..k {
            if !s.b[j * k + kk] {
                continue;
            }
            let (shape, p) = theta_prior(s, j, kk);
            expected += if v == Variant::Nb { shape } else { shape * p / (1.0 - p) };
        }
    }
    let factor = target / (expected / jn as f64);
    let rescale = |p: &mut f64| {
        let odds = *p / (1.0 - *p) * factor;
        *p = clamp_prob(odds / (1.0 + odds)).0;
    };
    match v {
        Variant::Nb | Variant::NbHdp | Variant::NbFtm => {
            s.r_atom.iter_mut().for_each(|r| *r *= factor);
        }
        Variant::NbLda | Variant::GammaNb => s.p_group.iter_mut().for_each(rescale),
        Variant::BetaGeometric | Variant::BetaNb | Variant::MarkedBetaNb => {
            s.p_atom.iter_mut().for_each(rescale)
        }
        Variant::DirPfa => {}
    }
}
