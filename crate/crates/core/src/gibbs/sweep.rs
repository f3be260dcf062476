use serde_json::json;

use super::{warmup_dispersion, Hyperparams, ModelState, TokenData, Variant};
use crate::distributions::{
    beta_unchecked, categorical_with_total, clamp_prob, crt_unchecked, dirichlet_into, gamma_unit,
    uniform_index, RngStream,
};
use crate::error::{NbpError, Result};

fn fail(state: &ModelState, step: &str, message: impl Into<String>) -> NbpError {
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let snapshot = json!({
        "variant": state.variant,
        "pinned": state.pinned,
        "gamma0": state.gamma0,
        "sum_r_atom": state.r_atom.iter().sum::<f64>(),
        "sum_r_group": state.r_group.iter().sum::<f64>(),
        "mean_p_atom": mean(&state.p_atom),
        "mean_p_group": mean(&state.p_group),
        "p_shared": state.p_shared,
        "p_prime": state.p_prime,
        "active_topics": state.active_topics(),
    });
    NbpError::Numerical {
        step: step.to_string(),
        message: message.into(),
        snapshot: snapshot.to_string(),
    }
}

fn valid_param(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

/// Gamma draw that reports invalid posterior parameters instead of repairing
/// them.
fn gamma(
    state: &ModelState,
    step: &str,
    shape: f64,
    scale: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    if !valid_param(shape) || !valid_param(scale) {
        return Err(fail(state, step, format!("gamma(shape = {shape}, scale = {scale})")));
    }
    Ok((gamma_unit(shape, rng) * scale).max(f64::MIN_POSITIVE))
}

/// Beta draw clamped into `[P_MIN, 1 - P_MIN]`; clamps are counted.
fn prob(
    state: &mut ModelState,
    step: &str,
    a: f64,
    b: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    if !valid_param(a) || !valid_param(b) {
        return Err(fail(state, step, format!("beta(a = {a}, b = {b})")));
    }
    let (p, clamped) = clamp_prob(beta_unchecked(a, b, rng));
    if clamped {
        state.diagnostics.p_clamped += 1;
    }
    Ok(p)
}

/// `-ln(1 - p)`.
#[inline]
fn neg_ln1m(p: f64) -> f64 {
    -(-p).ln_1p()
}

/// One systematic-scan block Gibbs sweep.
///
/// Order: assignments `z`; count tensors; the variant's CRT tables and
/// dispersion/probability updates (collapsed over `θ`); `θ`; topics `φ`. In
/// warm-up (`state.pinned`) the middle block is gamma-NB with `r_k = 50/K`
/// and `p_j = 0.5` held fixed.
pub fn sweep(
    state: &mut ModelState,
    data: &TokenData,
    hp: &Hyperparams,
    rng: &mut RngStream,
) -> Result<()> {
    if state.z.len() != data.num_tokens()
        || state.num_docs != data.num_docs()
        || state.num_terms != data.num_terms()
    {
        return Err(NbpError::Dimension("state does not match the training data".into()));
    }
    if hp.k != state.num_topics {
        return Err(NbpError::Config(format!(
            "hyperparameters say K = {}, state has {}",
            hp.k, state.num_topics
        )));
    }
    sample_assignments(state, data, rng)?;
    state.recount(data);
    if state.pinned {
        update_pinned(state, rng)?;
    } else {
        match state.variant {
            Variant::Nb => update_nb(state, hp, rng)?,
            Variant::NbLda => update_nb_lda(state, hp, rng)?,
            Variant::GammaNb | Variant::NbHdp => update_gamma_nb(state, hp, rng)?,
            Variant::NbFtm => update_nb_ftm(state, hp, rng)?,
            Variant::BetaGeometric => update_beta_geometric(state, hp, rng)?,
            Variant::BetaNb => update_beta_nb(state, hp, rng)?,
            Variant::MarkedBetaNb => update_marked_beta_nb(state, hp, rng)?,
            Variant::DirPfa => update_dir_pfa(state, hp, rng)?,
        }
    }
    sample_topics(state, hp, rng);
    Ok(())
}

/// `P(z_ji = k) ∝ φ_{v_ji k} θ_jk`. Consecutive tokens of the same term share
/// one weight vector.
fn sample_assignments(state: &mut ModelState, data: &TokenData, rng: &mut RngStream) -> Result<()> {
    let k = state.num_topics;
    let mut w = vec![0.0; k];
    let terms = data.terms();
    for j in 0..state.num_docs {
        let range = data.doc_range(j);
        let mut t = range.start;
        while t < range.end {
            let v = terms[t] as usize;
            let mut end = t + 1;
            while end < range.end && terms[end] as usize == v {
                end += 1;
            }
            let theta = &state.theta[j * k..(j + 1) * k];
            let phi = &state.phi[v * k..(v + 1) * k];
            let mut total = 0.0;
            for ((wk, &f), &th) in w.iter_mut().zip(phi).zip(theta) {
                *wk = f * th;
                total += *wk;
            }
            if !(total > 0.0 && total.is_finite()) {
                // products underflowed (or overflowed); redo in log space
                let mut hi = f64::NEG_INFINITY;
                for ((wk, &f), &th) in w.iter_mut().zip(phi).zip(theta) {
                    *wk = f.ln() + th.ln();
                    hi = hi.max(*wk);
                }
                if !hi.is_finite() {
                    return Err(fail(
                        state,
                        "assignments",
                        format!("document {j} has no topic with positive weight for term {v}"),
                    ));
                }
                total = 0.0;
                for wk in w.iter_mut() {
                    *wk = (*wk - hi).exp();
                    total += *wk;
                }
                state.diagnostics.log_space_fallbacks += 1;
            }
            for zt in &mut state.z[t..end] {
                *zt = categorical_with_total(&w, total, rng.uniform()) as u32;
            }
            t = end;
        }
    }
    Ok(())
}

/// `φ_k ~ Dir(η + n_{1·k}, ..., η + n_{V·k})`, topics in index order.
fn sample_topics(state: &mut ModelState, hp: &Hyperparams, rng: &mut RngStream) {
    let (k, v) = (state.num_topics, state.num_terms);
    let mut col = vec![0.0; v];
    for kk in 0..k {
        let n_vk = &state.n_vk;
        dirichlet_into(
            (0..v).map(|vv| hp.eta + f64::from(n_vk[vv * k + kk])),
            &mut col,
            rng,
        );
        for (vv, x) in col.iter().enumerate() {
            state.phi[vv * k + kk] = *x;
        }
    }
}

fn update_pinned(state: &mut ModelState, rng: &mut RngStream) -> Result<()> {
    let k = state.num_topics;
    let r0 = warmup_dispersion(k);
    for idx in 0..state.num_docs * k {
        state.theta[idx] = gamma(state, "warmup theta", r0 + f64::from(state.n_jk[idx]), 0.5, rng)?;
    }
    Ok(())
}

/// `l_jk ~ CRT(n_jk, r)` with `r` given per cell; returns per-atom and
/// per-document table totals.
fn sample_tables(
    state: &mut ModelState,
    rng: &mut RngStream,
    dispersion: impl Fn(&ModelState, usize, usize) -> f64,
) -> Result<(Vec<u64>, Vec<u64>)> {
    let k = state.num_topics;
    let mut by_atom = vec![0u64; k];
    let mut by_doc = vec![0u64; state.num_docs];
    for j in 0..state.num_docs {
        for kk in 0..k {
            let idx = j * k + kk;
            let n = state.n_jk[idx];
            let l = if n == 0 {
                0
            } else {
                let r = dispersion(state, j, kk);
                if !valid_param(r) {
                    return Err(fail(state, "tables", format!("CRT dispersion {r} at ({j}, {kk})")));
                }
                crt_unchecked(u64::from(n), r, rng) as u32
            };
            state.tables[idx] = l;
            by_atom[kk] += u64::from(l);
            by_doc[j] += u64::from(l);
        }
    }
    Ok((by_atom, by_doc))
}

/// `l' ~ CRT(l, r)` for each entry of `totals`, stored in `top_tables`.
fn sample_top_tables(state: &mut ModelState, totals: &[u64], r: f64, rng: &mut RngStream) -> Result<u64> {
    if !valid_param(r) {
        return Err(fail(state, "top tables", format!("CRT dispersion {r}")));
    }
    state.top_tables.iter_mut().for_each(|x| *x = 0);
    let mut sum = 0;
    for (i, &l) in totals.iter().enumerate() {
        let lp = crt_unchecked(l, r, rng);
        state.top_tables[i] = lp as u32;
        sum += lp;
    }
    Ok(sum)
}

/// `γ0 ~ Gamma(e0 + Σ l', 1 / (f0 + rate))`, where `rate` is the Poisson
/// exposure of the top-level tables.
fn sample_gamma0(
    state: &mut ModelState,
    hp: &Hyperparams,
    top_total: u64,
    rate: f64,
    rng: &mut RngStream,
) -> Result<()> {
    state.gamma0 = gamma(state, "gamma0", hp.e0 + top_total as f64, 1.0 / (hp.f0 + rate), rng)?;
    Ok(())
}

fn update_gamma_nb(state: &mut ModelState, hp: &Hyperparams, rng: &mut RngStream) -> Result<()> {
    let (k, kf) = (state.num_topics, state.num_topics as f64);
    let (by_atom, _) = sample_tables(state, rng, |s, _, kk| s.r_atom[kk])?;
    let top = sample_top_tables(state, &by_atom, state.gamma0 / kf, rng)?;
    if state.variant == Variant::GammaNb {
        let sum_r: f64 = state.r_atom.iter().sum();
        for j in 0..state.num_docs {
            state.p_group[j] = prob(state, "p_j", hp.a0 + state.doc_len[j] as f64, hp.b0 + sum_r, rng)?;
        }
    }
    let s: f64 = state.p_group.iter().map(|&p| neg_ln1m(p)).sum();
    state.p_prime = s / (hp.c + s);
    // -ln(1 - p') = ln(1 + s/c)
    sample_gamma0(state, hp, top, (s / hp.c).ln_1p(), rng)?;
    for kk in 0..k {
        let shape = state.gamma0 / kf + by_atom[kk] as f64;
        state.r_atom[kk] = gamma(state, "r_k", shape, 1.0 / (hp.c + s), rng)?;
    }
    for j in 0..state.num_docs {
        let pj = state.p_group[j];
        for kk in 0..k {
            let shape = state.r_atom[kk] + f64::from(state.n_jk[j * k + kk]);
            state.theta[j * k + kk] = gamma(state, "theta", shape, pj, rng)?;
        }
    }
    Ok(())
}

/// `P(b_jk = 1 | n_jk = 0) = π q / (π q + 1 - π)` with `q = (1 - p_j)^{r_k}`,
/// the NB probability of a zero count; `ln_q1` is `ln(1 - p_j)`.
pub(crate) fn ftm_active_probability(pi: f64, r: f64, ln_q1: f64) -> f64 {
    let keep = pi * (r * ln_q1).exp();
    keep / (keep + 1.0 - pi)
}

fn update_nb_ftm(state: &mut ModelState, hp: &Hyperparams, rng: &mut RngStream) -> Result<()> {
    let (k, kf, jn) = (state.num_topics, state.num_topics as f64, state.num_docs);
    // b_jk | n, r, π with θ integrated out
    let mut active = vec![0u64; k];
    for j in 0..jn {
        let ln_q = -neg_ln1m(state.p_group[j]);
        for kk in 0..k {
            let idx = j * k + kk;
            let on = if state.n_jk[idx] > 0 {
                true
            } else {
                rng.uniform() < ftm_active_probability(state.pi[kk], state.r_atom[kk], ln_q)
            };
            state.b[idx] = on;
            active[kk] += u64::from(on);
        }
    }
    let (pa, pb) = hp.pi_prior();
    for kk in 0..k {
        let on = active[kk] as f64;
        state.pi[kk] = prob(state, "pi_k", pa + on, pb + jn as f64 - on, rng)?;
    }
    let (by_atom, _) = sample_tables(state, rng, |s, _, kk| s.r_atom[kk])?;
    let top = sample_top_tables(state, &by_atom, state.gamma0 / kf, rng)?;
    // per-atom exposure s_k = -Σ_j b_jk ln(1 - p_j)
    let mut exposure = vec![0.0; k];
    for j in 0..jn {
        let e = neg_ln1m(state.p_group[j]);
        for kk in 0..k {
            if state.b[j * k + kk] {
                exposure[kk] += e;
            }
        }
    }
    let rate: f64 = exposure.iter().map(|&s| (s / hp.c).ln_1p()).sum::<f64>() / kf;
    state.p_prime = exposure.iter().map(|&s| s / (hp.c + s)).sum::<f64>() / kf;
    sample_gamma0(state, hp, top, rate, rng)?;
    for kk in 0..k {
        let shape = state.gamma0 / kf + by_atom[kk] as f64;
        state.r_atom[kk] = gamma(state, "r_k", shape, 1.0 / (hp.c + exposure[kk]), rng)?;
    }
    for j in 0..jn {
        let pj = state.p_group[j];
        for kk in 0..k {
            let idx = j * k + kk;
            state.theta[idx] = if state.b[idx] {
                let shape = state.r_atom[kk] + f64::from(state.n_jk[idx]);
                gamma(state, "theta", shape, pj, rng)?
            } else {
                0.0
            };
        }
    }
    Ok(())
}

fn update_nb(state: &mut ModelState, hp: &Hyperparams, rng: &mut RngStream) -> Result<()> {
    let (k, kf, jn) = (state.num_topics, state.num_topics as f64, state.num_docs);
    // θ_jk ≡ r_k: the atom totals n_·k ~ NB(γ0/K, p) once r is integrated out
    let top = sample_top_tables(state, &state.n_k.clone(), state.gamma0 / kf, rng)?;
    let total: u64 = state.doc_len.iter().sum();
    state.p_shared = prob(state, "p", hp.a0 + total as f64, hp.b0 + state.gamma0, rng)?;
    state.p_prime = state.p_shared;
    sample_gamma0(state, hp, top, neg_ln1m(state.p_shared), rng)?;
    let scale = state.p_shared / jn as f64;
    for kk in 0..k {
        let shape = state.gamma0 / kf + state.n_k[kk] as f64;
        state.r_atom[kk] = gamma(state, "r_k", shape, scale, rng)?;
    }
    for j in 0..jn {
        state.theta[j * k..(j + 1) * k].copy_from_slice(&state.r_atom);
    }
    state.tables.iter_mut().for_each(|x| *x = 0);
    Ok(())
}

fn update_nb_lda(state: &mut ModelState, hp: &Hyperparams, rng: &mut RngStream) -> Result<()> {
    let (k, kf, jn) = (state.num_topics, state.num_topics as f64, state.num_docs);
    let (_, by_doc) = sample_tables(state, rng, |s, j, _| s.r_group[j])?;
    let top = sample_top_tables(state, &by_doc, state.gamma0, rng)?;
    for j in 0..jn {
        let b = hp.b0 + kf * state.r_group[j];
        state.p_group[j] = prob(state, "p_j", hp.a0 + state.doc_len[j] as f64, b, rng)?;
    }
    // l_j· | r_j ~ Pois(r_j s_j) with s_j = -K ln(1 - p_j)
    let exposure: Vec<f64> = state.p_group.iter().map(|&p| kf * neg_ln1m(p)).collect();
    let rate: f64 = exposure.iter().map(|&s| (s / hp.c).ln_1p()).sum();
    state.p_prime = exposure.iter().map(|&s| s / (hp.c + s)).sum::<f64>() / jn.max(1) as f64;
    sample_gamma0(state, hp, top, rate, rng)?;
    for j in 0..jn {
        let shape = state.gamma0 + by_doc[j] as f64;
        state.r_group[j] = gamma(state, "r_j", shape, 1.0 / (hp.c + exposure[j]), rng)?;
    }
    for j in 0..jn {
        let (rj, pj) = (state.r_group[j], state.p_group[j]);
        for kk in 0..k {
            let shape = rj + f64::from(state.n_jk[j * k + kk]);
            state.theta[j * k + kk] = gamma(state, "theta", shape, pj, rng)?;
        }
    }
    Ok(())
}

fn update_beta_geometric(state: &mut ModelState, hp: &Hyperparams, rng: &mut RngStream) -> Result<()> {
    let (k, jn) = (state.num_topics, state.num_docs);
    for kk in 0..k {
        let a = hp.a0 + state.n_k[kk] as f64;
        state.p_atom[kk] = prob(state, "p_k", a, hp.b0 + jn as f64, rng)?;
    }
    for j in 0..jn {
        for kk in 0..k {
            let shape = 1.0 + f64::from(state.n_jk[j * k + kk]);
            state.theta[j * k + kk] = gamma(state, "theta", shape, state.p_atom[kk], rng)?;
        }
    }
    Ok(())
}

fn update_beta_nb(state: &mut ModelState, hp: &Hyperparams, rng: &mut RngStream) -> Result<()> {
    let (k, jn) = (state.num_topics, state.num_docs);
    let (_, by_doc) = sample_tables(state, rng, |s, j, _| s.r_group[j])?;
    let top = sample_top_tables(state, &by_doc, state.gamma0, rng)?;
    let sum_r: f64 = state.r_group.iter().sum();
    for kk in 0..k {
        let a = hp.a0 + state.n_k[kk] as f64;
        state.p_atom[kk] = prob(state, "p_k", a, hp.b0 + sum_r, rng)?;
    }
    let s: f64 = state.p_atom.iter().map(|&p| neg_ln1m(p)).sum();
    state.p_prime = s / (hp.c + s);
    sample_gamma0(state, hp, top, jn as f64 * (s / hp.c).ln_1p(), rng)?;
    for j in 0..jn {
        let shape = state.gamma0 + by_doc[j] as f64;
        state.r_group[j] = gamma(state, "r_j", shape, 1.0 / (hp.c + s), rng)?;
    }
    for j in 0..jn {
        let rj = state.r_group[j];
        for kk in 0..k {
            let shape = rj + f64::from(state.n_jk[j * k + kk]);
            state.theta[j * k + kk] = gamma(state, "theta", shape, state.p_atom[kk], rng)?;
        }
    }
    Ok(())
}

fn update_marked_beta_nb(state: &mut ModelState, hp: &Hyperparams, rng: &mut RngStream) -> Result<()> {
    let (k, kf, jn) = (state.num_topics, state.num_topics as f64, state.num_docs);
    let jf = jn as f64;
    let (by_atom, _) = sample_tables(state, rng, |s, _, kk| s.r_atom[kk])?;
    let top = sample_top_tables(state, &by_atom, state.gamma0 / kf, rng)?;
    for kk in 0..k {
        let a = hp.a0 + state.n_k[kk] as f64;
        let b = hp.b0 + jf * state.r_atom[kk];
        state.p_atom[kk] = prob(state, "p_k", a, b, rng)?;
    }
    let exposure: Vec<f64> = state.p_atom.iter().map(|&p| jf * neg_ln1m(p)).collect();
    let rate = exposure.iter().map(|&s| (s / hp.c).ln_1p()).sum::<f64>() / kf;
    state.p_prime = exposure.iter().map(|&s| s / (hp.c + s)).sum::<f64>() / kf;
    sample_gamma0(state, hp, top, rate, rng)?;
    for kk in 0..k {
        let shape = state.gamma0 / kf + by_atom[kk] as f64;
        state.r_atom[kk] = gamma(state, "r_k", shape, 1.0 / (hp.c + exposure[kk]), rng)?;
    }
    for j in 0..jn {
        for kk in 0..k {
            let shape = state.r_atom[kk] + f64::from(state.n_jk[j * k + kk]);
            state.theta[j * k + kk] = gamma(state, "theta", shape, state.p_atom[kk], rng)?;
        }
    }
    Ok(())
}

fn update_dir_pfa(state: &mut ModelState, hp: &Hyperparams, rng: &mut RngStream) -> Result<()> {
    let k = state.num_topics;
    let a = hp.lda_alpha / k as f64;
    for j in 0..state.num_docs {
        let n_jk = &state.n_jk[j * k..(j + 1) * k];
        let alpha: Vec<f64> = n_jk.iter().map(|&n| a + f64::from(n)).collect();
        dirichlet_into(alpha.into_iter(), &mut state.theta[j * k..(j + 1) * k], rng);
    }
    Ok(())
}

/// Fresh chain: uniform random assignments, topics from the prior
/// `Dir(η)`, and `θ_jk ~ Gamma(50/K + n_jk, 0.5)`. The state starts pinned.
pub fn initialize(
    variant: Variant,
    data: &TokenData,
    hp: &Hyperparams,
    rng: &mut RngStream,
) -> Result<ModelState> {
    hp.validate_for(variant)?;
    let mut state = ModelState::empty(variant, hp, data);
    let k = hp.k;
    for z in state.z.iter_mut() {
        *z = uniform_index(k, rng) as u32;
    }
    state.recount(data);
    let mut col = vec![0.0; state.num_terms];
    for kk in 0..k {
        dirichlet_into(std::iter::repeat_n(hp.eta, state.num_terms), &mut col, rng);
        for (v, x) in col.iter().enumerate() {
            state.phi[v * k + kk] = *x;
        }
    }
    update_pinned(&mut state, rng)?;
    Ok(state)
}

/// End the warm-up: every variant-specific parameter starts from the warm-up
/// values (`r = 50/K`, `p = 0.5`, `π = 0.5`, `b = 1`, `γ0 = 1`).
pub fn unpin(state: &mut ModelState) {
    let k = state.num_topics;
    let r0 = warmup_dispersion(k);
    state.pinned = false;
    state.r_atom.iter_mut().for_each(|r| *r = r0);
    state.r_group.iter_mut().for_each(|r| *r = r0);
    state.p_atom.iter_mut().for_each(|p| *p = 0.5);
    state.p_group.iter_mut().for_each(|p| *p = 0.5);
    state.p_shared = 0.5;
    state.pi.iter_mut().for_each(|p| *p = 0.5);
    state.b.iter_mut().for_each(|b| *b = true);
    state.gamma0 = 1.0;
    match state.variant {
        Variant::Nb => {
            for j in 0..state.num_docs {
                state.theta[j * k..(j + 1) * k].copy_from_slice(&state.r_atom);
            }
        }
        Variant::DirPfa => {
            for j in 0..state.num_docs {
                let row = &mut state.theta[j * k..(j + 1) * k];
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|x| *x /= total);
            }
        }
        _ => {}
    }
}

/// Initialize, run `warmup` pinned sweeps, then unpin.
pub fn init_schedule(
    variant: Variant,
    data: &TokenData,
    hp: &Hyperparams,
    warmup: usize,
    rng: &mut RngStream,
) -> Result<ModelState> {
    let mut state = initialize(variant, data, hp, rng)?;
    for _ in 0..warmup {
        sweep(&mut state, data, hp, rng)?;
    }
    unpin(&mut state);
    Ok(state)
}

/// Unnormalized predictive weights for the next token of document `j`.
///
/// Slot `k < K` is the posterior mean of `θ_jk` up to a factor shared across
/// atoms: `(shape_jk + n_jk)`, times `p_k` for variants whose scale varies by
/// atom. Slot `K` is the mass left for unseen atoms, which is zero under a
/// finite truncation.
pub fn predictive_weights(state: &ModelState, hp: &Hyperparams, j: usize) -> Vec<f64> {
    let k = state.num_topics;
    let n = |kk: usize| f64::from(state.n_jk[j * k + kk]);
    let mut w: Vec<f64> = (0..k)
        .map(|kk| match state.variant {
            Variant::Nb => state.r_atom[kk],
            Variant::GammaNb | Variant::NbHdp => state.r_atom[kk] + n(kk),
            Variant::NbFtm => {
                if state.b[j * k + kk] {
                    state.r_atom[kk] + n(kk)
                } else {
                    0.0
                }
            }
            Variant::NbLda => state.r_group[j] + n(kk),
            Variant::BetaGeometric => (1.0 + n(kk)) * state.p_atom[kk],
            Variant::BetaNb => (state.r_group[j] + n(kk)) * state.p_atom[kk],
            Variant::MarkedBetaNb => (state.r_atom[kk] + n(kk)) * state.p_atom[kk],
            Variant::DirPfa => hp.lda_alpha / k as f64 + n(kk),
        })
        .collect();
    w.push(0.0);
    w
}
