//! Posterior-averaged predictive probabilities, held-out perplexity, and the
//! per-iteration diagnostics written next to them.
//!
//! The predictive probability of term `v` in document `j` is
//! `f_jv = Σ_s Σ_k φ_vk θ_jk / Σ_s Σ_v Σ_k φ_vk θ_jk`, normalized per
//! document. Since each `φ_k` sums to one, the denominator is `Σ_s Σ_k θ_jk`;
//! only the numerators at tracked `(j, v)` positions are stored.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::SparseCountMatrix;
use crate::gibbs::{Diagnostics, ModelState, Variant};
use crate::error::{NbpError, Result};

/// Running sums behind `f_jv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveAccumulator {
    num_terms: usize,
    /// CSR over documents of the tracked terms, ascending within a document.
    offsets: Vec<usize>,
    terms: Vec<u32>,
    sums: Vec<f64>,
    /// `Σ_s Σ_k θ_jk` per document.
    doc_mass: Vec<f64>,
    samples: u64,
}

impl PredictiveAccumulator {
    /// Track exactly the nonzero positions of `heldout`.
    pub fn for_support(heldout: &SparseCountMatrix) -> Self {
        let mut offsets = vec![0];
        let mut terms = Vec::with_capacity(heldout.nnz());
        for j in 0..heldout.num_docs() {
            terms.extend(heldout.doc(j).map(|(v, _)| v as u32));
            offsets.push(terms.len());
        }
        let n = terms.len();
        PredictiveAccumulator {
            num_terms: heldout.num_terms(),
            offsets,
            terms,
            sums: vec![0.0; n],
            doc_mass: vec![0.0; heldout.num_docs()],
            samples: 0,
        }
    }

    /// Track every `(j, v)`; memory is `J x V`.
    pub fn dense(num_docs: usize, num_terms: usize) -> Self {
        let terms: Vec<u32> = (0..num_docs).flat_map(|_| 0..num_terms as u32).collect();
        PredictiveAccumulator {
            num_terms,
            offsets: (0..=num_docs).map(|j| j * num_terms).collect(),
            sums: vec![0.0; terms.len()],
            terms,
            doc_mass: vec![0.0; num_docs],
            samples: 0,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.doc_mass.len()
    }

    pub fn num_terms(&self) -> usize {
        self.num_terms
    }

    /// Number of collected samples `S`.
    pub fn samples(&self) -> u64 {
        self.samples
    }

    /// Add `Σ_k φ_vk θ_jk` at every tracked position.
    pub fn accumulate(&mut self, state: &ModelState) -> Result<()> {
        if state.num_docs != self.num_docs() || state.num_terms != self.num_terms {
            return Err(NbpError::Dimension(format!(
                "accumulator is {} x {}, state is {} x {}",
                self.num_docs(),
                self.num_terms,
                state.num_docs,
                state.num_terms
            )));
        }
        let k = state.num_topics;
        for j in 0..self.num_docs() {
            let theta = state.theta_row(j);
            self.doc_mass[j] += theta.iter().sum::<f64>();
            for idx in self.offsets[j]..self.offsets[j + 1] {
                let v = self.terms[idx] as usize;
                let phi = &state.phi[v * k..(v + 1) * k];
                self.sums[idx] += phi.iter().zip(theta).map(|(f, t)| f * t).sum::<f64>();
            }
        }
        self.samples += 1;
        Ok(())
    }

    /// `f_jv`, or `None` if the position is not tracked or nothing has been
    /// collected.
    pub fn f(&self, j: usize, v: usize) -> Option<f64> {
        if self.samples == 0 || j >= self.num_docs() {
            return None;
        }
        let range = self.offsets[j]..self.offsets[j + 1];
        let idx = self.terms[range.clone()].binary_search(&(v as u32)).ok()?;
        Some(self.sums[range.start + idx] / self.doc_mass[j])
    }

    /// Per-word perplexity of `heldout` under this accumulator's `f`.
    pub fn perplexity(&self, heldout: &SparseCountMatrix) -> Result<f64> {
        merged_perplexity(std::slice::from_ref(self), heldout)
    }
}

/// Perplexity under `f` averaged across chains with equal weight.
pub fn merged_perplexity(chains: &[PredictiveAccumulator], heldout: &SparseCountMatrix) -> Result<f64> {
    let first = chains
        .first()
        .ok_or_else(|| NbpError::NoSamples("no chains to evaluate".into()))?;
    for acc in chains {
        if acc.samples == 0 {
            return Err(NbpError::NoSamples(
                "no posterior samples collected yet (still in burn-in)".into(),
            ));
        }
        if acc.num_docs() != first.num_docs() || acc.num_terms != first.num_terms {
            return Err(NbpError::Dimension("chains disagree on corpus shape".into()));
        }
    }
    if heldout.num_docs() != first.num_docs() || heldout.num_terms() != first.num_terms {
        return Err(NbpError::Dimension(format!(
            "held-out matrix is {} x {}, accumulator is {} x {}",
            heldout.num_docs(),
            heldout.num_terms(),
            first.num_docs(),
            first.num_terms
        )));
    }
    let n = chains.len() as f64;
    perplexity_with(heldout, |j, v| {
        let mut f = 0.0;
        for acc in chains {
            f += acc.f(j, v).ok_or_else(|| {
                NbpError::Dimension(format!("held-out position ({j}, {v}) is not tracked"))
            })?;
        }
        Ok(f / n)
    })
}

/// `exp(-Σ_jv y_jv ln f_jv / y··)` for an arbitrary predictor `f`.
pub fn perplexity_with(
    heldout: &SparseCountMatrix,
    mut f: impl FnMut(usize, usize) -> Result<f64>,
) -> Result<f64> {
    let total = heldout.total_tokens();
    if total == 0 {
        return Err(NbpError::NoSamples("held-out set is empty".into()));
    }
    let mut log_lik = 0.0;
    for j in 0..heldout.num_docs() {
        for (v, y) in heldout.doc(j) {
            let fjv = f(j, v)?;
            if !(fjv > 0.0 && fjv.is_finite()) {
                return Err(NbpError::Numerical {
                    step: "perplexity".into(),
                    message: format!("predictive probability f[{j}, {v}] = {fjv}"),
                    snapshot: "{}".into(),
                });
            }
            log_lik += f64::from(y) * fjv.ln();
        }
    }
    Ok((-log_lik / total as f64).exp())
}

/// Iteration counts actually used by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    /// Pinned warm-up sweeps, counted inside `iterations`.
    pub warmup: usize,
    pub iterations: usize,
    /// Samples are collected from iterations `burn_in + 1 ..= iterations`.
    pub burn_in: usize,
    /// Keep every `thin`-th sample in the collection window.
    pub thin: usize,
}

impl Schedule {
    /// Whether the sample after (1-based) iteration `it` is collected.
    pub fn collects(&self, it: usize) -> bool {
        it > self.burn_in && it <= self.iterations && (it - self.burn_in - 1) % self.thin.max(1) == 0
    }

    pub fn expected_samples(&self) -> usize {
        (self.burn_in + 1..=self.iterations).filter(|&it| self.collects(it)).count()
    }
}

/// One row of the per-iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub k_active: usize,
    /// Held-out perplexity with the samples collected so far.
    pub perplexity: Option<f64>,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("iteration,k_active,perplexity\n");
    for r in rows {
        let p = r.perplexity.map(|p| p.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", r.iteration, r.k_active, p);
    }
    out
}

/// Per-atom parameters in decreasing order of usage `n_·k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomRow {
    pub atom: usize,
    pub tokens: u64,
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub pi: Option<f64>,
}

/// Per-document parameters in decreasing order of length `N_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub doc: usize,
    pub tokens: u64,
    pub r: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDumps {
    pub atoms: Vec<AtomRow>,
    pub groups: Vec<GroupRow>,
}

impl ParamDumps {
    pub fn from_state(s: &ModelState) -> Self {
        let v = s.variant;
        let mut order: Vec<usize> = (0..s.num_topics).collect();
        order.sort_by(|&a, &b| s.n_k[b].cmp(&s.n_k[a]).then(a.cmp(&b)));
        let atoms = order
            .into_iter()
            .map(|k| AtomRow {
                atom: k,
                tokens: s.n_k[k],
                r: v.has_atom_dispersion().then(|| s.r_atom[k]),
                p: if v.has_atom_probability() {
                    Some(s.p_atom[k])
                } else if v == Variant::Nb {
                    Some(s.p_shared)
                } else {
                    None
                },
                pi: (v == Variant::NbFtm).then(|| s.pi[k]),
            })
            .collect();
        let group_p = matches!(v, Variant::GammaNb | Variant::NbLda | Variant::NbHdp | Variant::NbFtm);
        let mut order: Vec<usize> = (0..s.num_docs).collect();
        order.sort_by(|&a, &b| s.doc_len[b].cmp(&s.doc_len[a]).then(a.cmp(&b)));
        let groups = order
            .into_iter()
            .map(|j| GroupRow {
                doc: j,
                tokens: s.doc_len[j],
                r: v.has_group_dispersion().then(|| s.r_group[j]),
                p: group_p.then(|| s.p_group[j]),
            })
            .collect();
        ParamDumps { atoms, groups }
    }

    pub fn atoms_csv(&self) -> String {
        let mut out = String::from("atom,tokens,r,p,pi\n");
        for a in &self.atoms {
            let _ = writeln!(out, "{},{},{},{},{}", a.atom, a.tokens, opt(a.r), opt(a.p), opt(a.pi));
        }
        out
    }

    pub fn groups_csv(&self) -> String {
        let mut out = String::from("doc,tokens,r,p\n");
        for g in &self.groups {
            let _ = writeln!(out, "{},{},{},{}", g.doc, g.tokens, opt(g.r), opt(g.p));
        }
        out
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|x| x.to_string()).unwrap_or_default()
}

/// Summary of one chain (or of several, merged).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub variant: Variant,
    pub schedule: Schedule,
    /// Collected samples `S` (per chain).
    pub samples: u64,
    pub chains: usize,
    pub heldout_tokens: u64,
    pub perplexity: Option<f64>,
    pub k_active_trace: Vec<usize>,
    pub param_dumps: ParamDumps,
    pub diagnostics: Diagnostics,
}
