use super::{Hyperparams, ModelState, TokenData, Variant};
use crate::distributions::{
    beta_unchecked, clamp_prob, dirichlet_into, gamma_unit, poisson_unchecked, sample_multinomial,
    CategoricalTable, RngStream,
};
use crate::error::{NbpError, Result};

/// Upper bound on the number of tokens `draw_data` will generate.
pub const MAX_DRAWN_TOKENS: u64 = 1 << 26;

fn gamma(shape: f64, scale: f64, rng: &mut RngStream) -> f64 {
    (gamma_unit(shape, rng) * scale).max(f64::MIN_POSITIVE)
}

fn beta(a: f64, b: f64, rng: &mut RngStream) -> f64 {
    clamp_prob(beta_unchecked(a, b, rng)).0
}

fn odds(p: f64) -> f64 {
    p / (1.0 - p)
}

/// Draw every parameter of `variant` from its prior. `doc_len` fixes the
/// number of documents and, for the Dirichlet baseline, their lengths. The
/// returned state is unpinned and holds no tokens.
pub fn draw_prior(
    variant: Variant,
    hp: &Hyperparams,
    num_terms: usize,
    doc_len: &[u64],
    rng: &mut RngStream,
) -> Result<ModelState> {
    hp.validate_for(variant)?;
    if num_terms == 0 {
        return Err(NbpError::Dimension("vocabulary is empty".into()));
    }
    let empty = TokenData::from_doc_terms(num_terms, &vec![Vec::new(); doc_len.len()])?;
    let mut s = ModelState::empty(variant, hp, &empty);
    s.pinned = false;
    s.doc_len.copy_from_slice(doc_len);
    let (k, kf, jn) = (hp.k, hp.k as f64, doc_len.len());

    let mut col = vec![0.0; num_terms];
    for kk in 0..k {
        dirichlet_into(std::iter::repeat_n(hp.eta, num_terms), &mut col, rng);
        for (v, x) in col.iter().enumerate() {
            s.phi[v * k + kk] = *x;
        }
    }

    if variant.uses_gamma0() {
        s.gamma0 = gamma(hp.e0, 1.0 / hp.f0, rng);
    }
    match variant {
        Variant::Nb => {
            s.p_shared = beta(hp.a0, hp.b0, rng);
            let scale = odds(s.p_shared) / jn.max(1) as f64;
            for kk in 0..k {
                s.r_atom[kk] = gamma(s.gamma0 / kf, scale, rng);
            }
            for j in 0..jn {
                s.theta[j * k..(j + 1) * k].copy_from_slice(&s.r_atom);
            }
        }
        Variant::GammaNb | Variant::NbHdp | Variant::NbFtm => {
            for kk in 0..k {
                s.r_atom[kk] = gamma(s.gamma0 / kf, 1.0 / hp.c, rng);
            }
            if variant == Variant::GammaNb {
                for j in 0..jn {
                    s.p_group[j] = beta(hp.a0, hp.b0, rng);
                }
            }
            if variant == Variant::NbFtm {
                let (pa, pb) = hp.pi_prior();
                for kk in 0..k {
                    s.pi[kk] = beta(pa, pb, rng);
                }
                for j in 0..jn {
                    for kk in 0..k {
                        s.b[j * k + kk] = rng.uniform() < s.pi[kk];
                    }
                }
            }
            for j in 0..jn {
                let scale = odds(s.p_group[j]);
                for kk in 0..k {
                    let idx = j * k + kk;
                    s.theta[idx] = if s.b[idx] { gamma(s.r_atom[kk], scale, rng) } else { 0.0 };
                }
            }
        }
        Variant::NbLda => {
            for j in 0..jn {
                s.r_group[j] = gamma(s.gamma0, 1.0 / hp.c, rng);
                s.p_group[j] = beta(hp.a0, hp.b0, rng);
                let scale = odds(s.p_group[j]);
                for kk in 0..k {
                    s.theta[j * k + kk] = gamma(s.r_group[j], scale, rng);
                }
            }
        }
        Variant::BetaGeometric | Variant::BetaNb | Variant::MarkedBetaNb => {
            for kk in 0..k {
                s.p_atom[kk] = beta(hp.a0, hp.b0, rng);
            }
            match variant {
                Variant::BetaNb => {
                    for j in 0..jn {
                        s.r_group[j] = gamma(s.gamma0, 1.0 / hp.c, rng);
                    }
                }
                Variant::MarkedBetaNb => {
                    for kk in 0..k {
                        s.r_atom[kk] = gamma(s.gamma0 / kf, 1.0 / hp.c, rng);
                    }
                }
                _ => {}
            }
            for j in 0..jn {
                for kk in 0..k {
                    let shape = match variant {
                        Variant::BetaGeometric => 1.0,
                        Variant::BetaNb => s.r_group[j],
                        _ => s.r_atom[kk],
                    };
                    s.theta[j * k + kk] = gamma(shape, odds(s.p_atom[kk]), rng);
                }
            }
        }
        Variant::DirPfa => {
            let a = hp.lda_alpha / kf;
            for j in 0..jn {
                dirichlet_into(std::iter::repeat_n(a, k), &mut s.theta[j * k..(j + 1) * k], rng);
            }
        }
    }
    Ok(s)
}

/// Draw tokens given the parameters in `state`: `n_jk ~ Pois(θ_jk)` (for the
/// Dirichlet baseline, `n_j· ~ Mult(N_j, θ_j)` with `N_j = state.doc_len[j]`),
/// then each token's term from `φ_k`. Assignments and counts in `state` are
/// replaced; tokens within a document are sorted by term.
pub fn draw_data(state: &mut ModelState, rng: &mut RngStream) -> Result<TokenData> {
    let (k, jn) = (state.num_topics, state.num_docs);
    let mut n_jk = vec![0u64; jn * k];
    let mut total = 0u64;
    for j in 0..jn {
        let row = &mut n_jk[j * k..(j + 1) * k];
        if state.variant == Variant::DirPfa {
            let counts = sample_multinomial(state.doc_len[j], state.theta_row(j), rng)?;
            row.copy_from_slice(&counts);
        } else {
            for (kk, n) in row.iter_mut().enumerate() {
                let lambda = state.theta[j * k + kk];
                *n = if lambda > 0.0 { poisson_unchecked(lambda, rng) } else { 0 };
            }
        }
        total += row.iter().sum::<u64>();
        if total > MAX_DRAWN_TOKENS {
            return Err(NbpError::Dimension(format!(
                "drawn corpus exceeds {MAX_DRAWN_TOKENS} tokens"
            )));
        }
    }

    let tables = (0..k)
        .map(|kk| CategoricalTable::new(&state.topic(kk)))
        .collect::<Result<Vec<_>>>()?;
    let mut docs = Vec::with_capacity(jn);
    let mut z = Vec::with_capacity(total as usize);
    let mut tokens: Vec<(u32, u32)> = Vec::new();
    for j in 0..jn {
        tokens.clear();
        for kk in 0..k {
            for _ in 0..n_jk[j * k + kk] {
                tokens.push((tables[kk].sample(rng) as u32, kk as u32));
            }
        }
        tokens.sort_unstable();
        docs.push(tokens.iter().map(|&(v, _)| v).collect::<Vec<_>>());
        z.extend(tokens.iter().map(|&(_, kk)| kk));
    }
    let data = TokenData::from_doc_terms(state.num_terms, &docs)?;
    state.z = z;
    state.recount(&data);
    Ok(data)
}
