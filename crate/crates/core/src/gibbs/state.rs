use serde::{Deserialize, Serialize};

use super::{Hyperparams, Variant};
use crate::corpus::SparseCountMatrix;
use crate::error::{NbpError, Result};

/// Training tokens laid out document by document. Within a document, tokens
/// appear in the matrix's term order, each `(j, v)` entry repeated `m_vj`
/// times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenData {
    num_terms: usize,
    doc_offsets: Vec<usize>,
    terms: Vec<u32>,
}

impl TokenData {
    pub fn from_matrix(m: &SparseCountMatrix) -> Self {
        let mut doc_offsets = Vec::with_capacity(m.num_docs() + 1);
        doc_offsets.push(0);
        let mut terms = Vec::with_capacity(m.total_tokens() as usize);
        for j in 0..m.num_docs() {
            for (v, c) in m.doc(j) {
                terms.extend(std::iter::repeat_n(v as u32, c as usize));
            }
            doc_offsets.push(terms.len());
        }
        TokenData {
            num_terms: m.num_terms(),
            doc_offsets,
            terms,
        }
    }

    /// Build from per-document term lists. Each list must already be sorted
    /// if the result is meant to line up with a matrix.
    pub fn from_doc_terms(num_terms: usize, docs: &[Vec<u32>]) -> Result<Self> {
        let mut doc_offsets = vec![0];
        let mut terms = Vec::new();
        for d in docs {
            if let Some(&v) = d.iter().find(|&&v| v as usize >= num_terms) {
                return Err(NbpError::Dimension(format!("term {v} outside vocabulary of {num_terms}")));
            }
            terms.extend_from_slice(d);
            doc_offsets.push(terms.len());
        }
        Ok(TokenData {
            num_terms,
            doc_offsets,
            terms,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.doc_offsets.len() - 1
    }

    pub fn num_terms(&self) -> usize {
        self.num_terms
    }

    pub fn num_tokens(&self) -> usize {
        self.terms.len()
    }

    pub fn doc_range(&self, j: usize) -> std::ops::Range<usize> {
        self.doc_offsets[j]..self.doc_offsets[j + 1]
    }

    pub fn doc_terms(&self, j: usize) -> &[u32] {
        &self.terms[self.doc_range(j)]
    }

    pub fn terms(&self) -> &[u32] {
        &self.terms
    }

    pub fn to_matrix(&self) -> SparseCountMatrix {
        let docs: Vec<Vec<(usize, u32)>> = (0..self.num_docs())
            .map(|j| self.doc_terms(j).iter().map(|&v| (v as usize, 1)).collect())
            .collect();
        SparseCountMatrix::from_docs(self.num_terms, &docs).expect("token ids are in range")
    }
}

/// Counters for silent numerical adjustments made during sampling.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Probability draws moved into `[P_MIN, 1 - P_MIN]`.
    pub p_clamped: u64,
    /// Documents whose assignment weights had to be renormalized in log
    /// space because the direct products underflowed.
    pub log_space_fallbacks: u64,
}

/// Every latent variable of one chain.
///
/// Dense matrices are row-major: `phi` and `n_vk` are `V x K` (row per term),
/// `theta`, `n_jk`, `tables` and `b` are `J x K` (row per document). Which of
/// the parameter vectors are live depends on the variant; the others keep
/// their initial values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub variant: Variant,
    pub num_topics: usize,
    pub num_terms: usize,
    pub num_docs: usize,
    /// Warm-up mode: gamma-NB with `r_k` and `p_j` pinned.
    pub pinned: bool,

    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub r_atom: Vec<f64>,
    pub r_group: Vec<f64>,
    pub p_atom: Vec<f64>,
    pub p_group: Vec<f64>,
    /// Single probability parameter of the plain NB process.
    pub p_shared: f64,
    pub gamma0: f64,
    pub pi: Vec<f64>,
    pub b: Vec<bool>,

    pub z: Vec<u32>,
    pub n_jk: Vec<u32>,
    pub n_vk: Vec<u32>,
    pub n_k: Vec<u64>,
    pub doc_len: Vec<u64>,

    /// `l_jk` from the most recent sweep.
    pub tables: Vec<u32>,
    /// `l'_k` (per atom) or `l'_j` (per document) from the most recent sweep.
    pub top_tables: Vec<u32>,
    /// Most recent `p'` (mean over atoms where it is atom-specific).
    pub p_prime: f64,

    pub diagnostics: Diagnostics,
}

/// Initial dispersion used during warm-up, `r_k = 50 / K`.
pub fn warmup_dispersion(k: usize) -> f64 {
    50.0 / k as f64
}

impl ModelState {
    /// Zeroed state sized for `data`, with warm-up parameter values.
    pub fn empty(variant: Variant, hp: &Hyperparams, data: &TokenData) -> Self {
        let (k, v, j) = (hp.k, data.num_terms(), data.num_docs());
        let r0 = warmup_dispersion(k);
        ModelState {
            variant,
            num_topics: k,
            num_terms: v,
            num_docs: j,
            pinned: true,
            phi: vec![1.0 / v as f64; v * k],
            theta: vec![r0; j * k],
            r_atom: vec![r0; k],
            r_group: vec![r0; j],
            p_atom: vec![0.5; k],
            p_group: vec![0.5; j],
            p_shared: 0.5,
            gamma0: 1.0,
            pi: vec![0.5; k],
            b: vec![true; j * k],
            z: vec![0; data.num_tokens()],
            n_jk: vec![0; j * k],
            n_vk: vec![0; v * k],
            n_k: vec![0; k],
            doc_len: (0..j).map(|d| data.doc_range(d).len() as u64).collect(),
            tables: vec![0; j * k],
            top_tables: vec![0; k.max(j)],
            p_prime: 0.0,
            diagnostics: Diagnostics::default(),
        }
    }

    /// Rebuild every count array from `z`.
    pub fn recount(&mut self, data: &TokenData) {
        let k = self.num_topics;
        self.n_jk.iter_mut().for_each(|x| *x = 0);
        self.n_vk.iter_mut().for_each(|x| *x = 0);
        self.n_k.iter_mut().for_each(|x| *x = 0);
        for j in 0..self.num_docs {
            let range = data.doc_range(j);
            self.doc_len[j] = range.len() as u64;
            for t in range {
                let topic = self.z[t] as usize;
                let v = data.terms()[t] as usize;
                self.n_jk[j * k + topic] += 1;
                self.n_vk[v * k + topic] += 1;
                self.n_k[topic] += 1;
            }
        }
    }

    /// Number of atoms with at least one assigned token.
    pub fn active_topics(&self) -> usize {
        self.n_k.iter().filter(|&&n| n > 0).count()
    }

    pub fn theta_row(&self, j: usize) -> &[f64] {
        &self.theta[j * self.num_topics..(j + 1) * self.num_topics]
    }

    pub fn phi_at(&self, v: usize, k: usize) -> f64 {
        self.phi[v * self.num_topics + k]
    }

    /// Topic `k` as a length-V vector.
    pub fn topic(&self, k: usize) -> Vec<f64> {
        (0..self.num_terms).map(|v| self.phi_at(v, k)).collect()
    }

    /// Check the bookkeeping invariants against `data`. Used by tests and on
    /// checkpoint load.
    pub fn check_consistency(&self, data: &TokenData) -> Result<()> {
        let (k, v, j) = (self.num_topics, self.num_terms, self.num_docs);
        let bad = |msg: String| Err(NbpError::Dimension(msg));
        if data.num_docs() != j || data.num_terms() != v || data.num_tokens() != self.z.len() {
            return bad(format!(
                "state is {j} docs x {v} terms x {} tokens, data is {} x {} x {}",
                self.z.len(),
                data.num_docs(),
                data.num_terms(),
                data.num_tokens()
            ));
        }
        let sizes = [
            (self.phi.len(), v * k, "phi"),
            (self.theta.len(), j * k, "theta"),
            (self.r_atom.len(), k, "r_atom"),
            (self.r_group.len(), j, "r_group"),
            (self.p_atom.len(), k, "p_atom"),
            (self.p_group.len(), j, "p_group"),
            (self.pi.len(), k, "pi"),
            (self.b.len(), j * k, "b"),
            (self.n_jk.len(), j * k, "n_jk"),
            (self.n_vk.len(), v * k, "n_vk"),
            (self.n_k.len(), k, "n_k"),
            (self.doc_len.len(), j, "doc_len"),
            (self.tables.len(), j * k, "tables"),
        ];
        for (got, want, name) in sizes {
            if got != want {
                return bad(format!("{name} has length {got}, expected {want}"));
            }
        }
        if let Some(&t) = self.z.iter().find(|&&t| t as usize >= k) {
            return bad(format!("assignment {t} outside {k} topics"));
        }
        let mut copy = self.clone();
        copy.recount(data);
        if copy.n_jk != self.n_jk || copy.n_vk != self.n_vk || copy.n_k != self.n_k {
            return bad("count arrays disagree with assignments".into());
        }
        for jj in 0..j {
            for kk in 0..k {
                if self.n_jk[jj * k + kk] > 0 && !self.b[jj * k + kk] {
                    return bad(format!("b[{jj},{kk}] = 0 with a positive count"));
                }
            }
        }
        Ok(())
    }
}
