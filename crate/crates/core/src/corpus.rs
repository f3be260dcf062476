//! Bag-of-words corpora: the sparse term-document count matrix, UCI
//! bag-of-words I/O, vocabulary filtering, and the per-document token holdout
//! used for held-out perplexity.
//!
//! The UCI `docword` format is three header lines (`D`, `W`, `NNZ`) followed
//! by `NNZ` lines of `docID wordID count`, all ids 1-based. The vocabulary
//! file holds one UTF-8 term per line, line `i` naming term id `i`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::{RngStream, StreamName};
use crate::error::{NbpError, Result};

/// Upper bound accepted for `D` and `W` in a docword header.
pub const MAX_DIMENSION: usize = 1 << 24;

/// Term-document counts in compressed sparse row form, one row per document.
/// Within a row, terms are strictly increasing and every count is positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseCountMatrix {
    num_terms: usize,
    doc_offsets: Vec<usize>,
    terms: Vec<u32>,
    counts: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocab: Option<Vec<String>>,
}

impl SparseCountMatrix {
    /// Build from `(doc, term, count)` triplets, 0-based. Order is free;
    /// duplicates, zero counts and out-of-range ids are rejected.
    pub fn from_triplets(
        num_docs: usize,
        num_terms: usize,
        triplets: &[(usize, usize, u32)],
    ) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(j, v, c) in &sorted {
            if j >= num_docs || v >= num_terms {
                return Err(NbpError::Dimension(format!(
                    "entry ({j}, {v}) outside a {num_docs} x {num_terms} matrix"
                )));
            }
            if c == 0 {
                return Err(NbpError::Domain(format!("zero count at ({j}, {v})")));
            }
        }
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(NbpError::Dimension(format!(
                "duplicate entry for document {} term {}",
                w[0].0, w[0].1
            )));
        }
        let mut doc_offsets = Vec::with_capacity(num_docs + 1);
        doc_offsets.push(0);
        let mut cursor = 0;
        for j in 0..num_docs {
            while cursor < sorted.len() && sorted[cursor].0 == j {
                cursor += 1;
            }
            doc_offsets.push(cursor);
        }
        Ok(SparseCountMatrix {
            num_terms,
            doc_offsets,
            terms: sorted.iter().map(|t| t.1 as u32).collect(),
            counts: sorted.iter().map(|t| t.2).collect(),
            vocab: None,
        })
    }

    /// Build from one `(term, count)` list per document. Zero counts are
    /// dropped; repeated terms within a document are merged.
    pub fn from_docs(num_terms: usize, docs: &[Vec<(usize, u32)>]) -> Result<Self> {
        let mut doc_offsets = vec![0];
        let mut terms = Vec::new();
        let mut counts = Vec::new();
        for (j, doc) in docs.iter().enumerate() {
            let mut row: Vec<(usize, u32)> = doc.iter().copied().filter(|&(_, c)| c > 0).collect();
            row.sort_unstable();
            let mut merged: Vec<(usize, u32)> = Vec::with_capacity(row.len());
            for (v, c) in row {
                if v >= num_terms {
                    return Err(NbpError::Dimension(format!(
                        "document {j} uses term {v} but V = {num_terms}"
                    )));
                }
                match merged.last_mut() {
                    Some(last) if last.0 == v => last.1 += c,
                    _ => merged.push((v, c)),
                }
            }
            for (v, c) in merged {
                terms.push(v as u32);
                counts.push(c);
            }
            doc_offsets.push(terms.len());
        }
        Ok(SparseCountMatrix {
            num_terms,
            doc_offsets,
            terms,
            counts,
            vocab: None,
        })
    }

    pub fn with_vocab(mut self, vocab: Vec<String>) -> Result<Self> {
        if vocab.len() != self.num_terms {
            return Err(NbpError::Dimension(format!(
                "vocabulary has {} terms, matrix has {}",
                vocab.len(),
                self.num_terms
            )));
        }
        self.vocab = Some(vocab);
        Ok(self)
    }

    pub fn num_docs(&self) -> usize {
        self.doc_offsets.len() - 1
    }

    pub fn num_terms(&self) -> usize {
        self.num_terms
    }

    pub fn nnz(&self) -> usize {
        self.terms.len()
    }

    pub fn vocab(&self) -> Option<&[String]> {
        self.vocab.as_deref()
    }

    /// `(term, count)` pairs of document `j`, terms increasing.
    pub fn doc(&self, j: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let (a, b) = (self.doc_offsets[j], self.doc_offsets[j + 1]);
        self.terms[a..b]
            .iter()
            .zip(&self.counts[a..b])
            .map(|(&v, &c)| (v as usize, c))
    }

    /// `N_j`, the token count of document `j`.
    pub fn doc_len(&self, j: usize) -> u64 {
        let (a, b) = (self.doc_offsets[j], self.doc_offsets[j + 1]);
        self.counts[a..b].iter().map(|&c| u64::from(c)).sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Count of `(j, v)`, zero when absent.
    pub fn get(&self, j: usize, v: usize) -> u32 {
        let (a, b) = (self.doc_offsets[j], self.doc_offsets[j + 1]);
        match self.terms[a..b].binary_search(&(v as u32)) {
            Ok(i) => self.counts[a + i],
            Err(_) => 0,
        }
    }

    /// All nonzero entries as 0-based `(doc, term, count)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        (0..self.num_docs()).flat_map(move |j| self.doc(j).map(move |(v, c)| (j, v, c)))
    }

    /// Entrywise sum. Both matrices must have the same shape.
    pub fn add(&self, other: &SparseCountMatrix) -> Result<SparseCountMatrix> {
        if self.num_docs() != other.num_docs() || self.num_terms != other.num_terms {
            return Err(NbpError::Dimension("cannot add matrices of different shapes".into()));
        }
        let docs: Vec<Vec<(usize, u32)>> = (0..self.num_docs())
            .map(|j| self.doc(j).chain(other.doc(j)).collect())
            .collect();
        let mut sum = SparseCountMatrix::from_docs(self.num_terms, &docs)?;
        sum.vocab = self.vocab.clone();
        Ok(sum)
    }

    /// Drop terms that occur in fewer than `min_docs` documents. Returns the
    /// filtered matrix and, for each kept term, its id in `self`.
    pub fn filter_min_doc_freq(&self, min_docs: usize) -> (SparseCountMatrix, Vec<usize>) {
        let mut df = vec![0usize; self.num_terms];
        for &v in &self.terms {
            df[v as usize] += 1;
        }
        let kept: Vec<usize> = (0..self.num_terms).filter(|&v| df[v] >= min_docs).collect();
        let mut remap = vec![usize::MAX; self.num_terms];
        for (new, &old) in kept.iter().enumerate() {
            remap[old] = new;
        }
        let docs: Vec<Vec<(usize, u32)>> = (0..self.num_docs())
            .map(|j| {
                self.doc(j)
                    .filter(|&(v, _)| remap[v] != usize::MAX)
                    .map(|(v, c)| (remap[v], c))
                    .collect()
            })
            .collect();
        let mut out = SparseCountMatrix::from_docs(kept.len(), &docs)
            .expect("remapped ids are in range");
        if let Some(vocab) = &self.vocab {
            out.vocab = Some(kept.iter().map(|&v| vocab[v].clone()).collect());
        }
        (out, kept)
    }

    /// Write the UCI docword representation.
    pub fn write_docword<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.num_docs())?;
        writeln!(out, "{}", self.num_terms)?;
        writeln!(out, "{}", self.nnz())?;
        for (j, v, c) in self.triplets() {
            writeln!(out, "{} {} {}", j + 1, v + 1, c)?;
        }
        Ok(())
    }

    pub fn save_docword(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_docword(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Parse a UCI docword stream.
pub fn parse_docword<R: BufRead>(reader: R) -> Result<SparseCountMatrix> {
    let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["D", "W", "NNZ"]) {
        let (n, line) = lines
            .next()
            .ok_or_else(|| NbpError::parse(0, format!("missing header line {name}")))?;
        let line = line?;
        *slot = line
            .trim()
            .parse()
            .map_err(|e| NbpError::parse(n, format!("header {name}: {e}")))?;
    }
    let [num_docs, num_terms, nnz] = header;
    if num_docs > MAX_DIMENSION || num_terms > MAX_DIMENSION {
        return Err(NbpError::Dimension(format!(
            "D = {num_docs}, W = {num_terms} exceeds the supported maximum {MAX_DIMENSION}"
        )));
    }
    let mut triplets = Vec::new();
    for (n, line) in lines {
        let line = line?;
        let mut fields = line.split_whitespace();
        let mut next = |what: &str| -> Result<u64> {
            let tok = fields
                .next()
                .ok_or_else(|| NbpError::parse(n, format!("missing {what}")))?;
            tok.parse::<u64>()
                .map_err(|e| NbpError::parse(n, format!("{what} {tok:?}: {e}")))
        };
        let doc = next("docID")?;
        let term = next("wordID")?;
        let count = next("count")?;
        if fields.next().is_some() {
            return Err(NbpError::parse(n, "trailing fields"));
        }
        if doc == 0 || doc > num_docs as u64 {
            return Err(NbpError::parse(n, format!("docID {doc} outside 1..={num_docs}")));
        }
        if term == 0 || term > num_terms as u64 {
            return Err(NbpError::parse(n, format!("wordID {term} outside 1..={num_terms}")));
        }
        if count == 0 || count > u64::from(u32::MAX) {
            return Err(NbpError::parse(n, format!("count {count} must be in 1..=2^32-1")));
        }
        triplets.push((doc as usize - 1, term as usize - 1, count as u32));
    }
    if triplets.len() != nnz {
        return Err(NbpError::Dimension(format!(
            "header declares NNZ = {nnz} but {} entries follow",
            triplets.len()
        )));
    }
    SparseCountMatrix::from_triplets(num_docs, num_terms, &triplets)
}

/// Parse a vocabulary stream, one term per line. Trailing `\r` is stripped.
pub fn parse_vocab<R: BufRead>(reader: R) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| NbpError::parse(i + 1, e.to_string()))?;
        out.push(line.trim_end_matches('\r').to_string());
    }
    // a single trailing empty line is an artifact of the final newline
    while out.last().is_some_and(|s| s.is_empty()) {
        out.pop();
    }
    Ok(out)
}

/// Load a docword file and, optionally, its vocabulary.
pub fn load_uci(docword: impl AsRef<Path>, vocab: Option<&Path>) -> Result<SparseCountMatrix> {
    let m = parse_docword(BufReader::new(File::open(docword)?))?;
    match vocab {
        Some(p) => {
            let terms = parse_vocab(BufReader::new(File::open(p)?))?;
            m.with_vocab(terms)
        }
        None => Ok(m),
    }
}

pub fn write_vocab<W: Write>(vocab: &[String], mut out: W) -> Result<()> {
    for t in vocab {
        writeln!(out, "{t}")?;
    }
    Ok(())
}

/// Token-level train/held-out partition of a corpus.
#[derive(Debug, Clone)]
pub struct HoldoutSplit {
    pub train: SparseCountMatrix,
    pub heldout: SparseCountMatrix,
    pub fraction: f64,
    pub seed: u64,
}

/// Keep a random `fraction` of each document's tokens for training and hold
/// out the rest.
///
/// Tokens, not term types, are sampled without replacement. Document `j`
/// keeps `floor(fraction * N_j)` tokens plus one more with probability equal
/// to the fractional remainder.
pub fn split_holdout(m: &SparseCountMatrix, fraction: f64, seed: u64) -> Result<HoldoutSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(NbpError::Config(format!(
            "training fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut rng = RngStream::named(seed, StreamName::HoldoutSplit);
    let mut train_docs = Vec::with_capacity(m.num_docs());
    let mut held_docs = Vec::with_capacity(m.num_docs());
    let mut tokens: Vec<usize> = Vec::new();
    for j in 0..m.num_docs() {
        tokens.clear();
        for (v, c) in m.doc(j) {
            tokens.extend(std::iter::repeat_n(v, c as usize));
        }
        let target = fraction * tokens.len() as f64;
        let mut keep = target.floor() as usize;
        if rng.uniform() < target - target.floor() {
            keep += 1;
        }
        // partial Fisher-Yates: the first `keep` slots become a uniform subset
        for i in 0..keep {
            let pick = i + crate::distributions::uniform_index(tokens.len() - i, &mut rng);
            tokens.swap(i, pick);
        }
        train_docs.push(tokens[..keep].iter().map(|&v| (v, 1)).collect::<Vec<_>>());
        held_docs.push(tokens[keep..].iter().map(|&v| (v, 1)).collect::<Vec<_>>());
    }
    let mut train = SparseCountMatrix::from_docs(m.num_terms(), &train_docs)?;
    let mut heldout = SparseCountMatrix::from_docs(m.num_terms(), &held_docs)?;
    train.vocab = m.vocab.clone();
    heldout.vocab = m.vocab.clone();
    Ok(HoldoutSplit {
        train,
        heldout,
        fraction,
        seed,
    })
}
