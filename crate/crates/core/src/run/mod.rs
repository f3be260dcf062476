//! Run configuration, the per-chain driver, and checkpoints.

mod dist_check;
mod fit;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use dist_check::{dist_check, DistCheckReport, SuiteResult};
pub use fit::{evaluate_checkpoint, fit, resume, FitOptions, FitOutcome, MergedReport, LAYOUT_VERSION};

use crate::corpus::SparseCountMatrix;
use crate::distributions::{RngState, RngStream, StreamName};
use crate::error::{NbpError, Result};
use crate::eval::{ParamDumps, PerplexityReport, PredictiveAccumulator, Schedule, TraceRow};
use crate::gibbs::{initialize, sweep, unpin, Hyperparams, ModelState, TokenData, Variant};

/// Everything that determines a run. Read from TOML; every field has a
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    /// Total sweeps, including the pinned warm-up.
    pub iterations: usize,
    /// Sweeps discarded before collection starts.
    pub burn_in: usize,
    /// Initial sweeps run as gamma-NB with `r_k = 50/K`, `p_j = 0.5`.
    pub warmup: usize,
    pub thin: usize,
    /// Fraction of each document's tokens used for training.
    pub train_fraction: f64,
    pub seed: u64,
    pub chains: usize,
    pub out_dir: PathBuf,
    /// Drop terms that appear in fewer documents than this (0 keeps all).
    pub min_doc_freq: usize,
    /// Write a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: usize,
    pub hyperparams: Hyperparams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: Variant::GammaNb,
            iterations: 2500,
            burn_in: 1000,
            warmup: 50,
            thin: 1,
            train_fraction: 0.6,
            seed: 1,
            chains: 1,
            out_dir: PathBuf::from("nbp-run"),
            min_doc_freq: 0,
            checkpoint_every: 100,
            hyperparams: Hyperparams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| NbpError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| NbpError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            warmup: self.warmup,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams.validate_for(self.variant)?;
        let bad = |m: String| Err(NbpError::Config(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.burn_in >= self.iterations {
            return bad(format!(
                "burn_in ({}) must be below iterations ({})",
                self.burn_in, self.iterations
            ));
        }
        if self.warmup > self.iterations {
            return bad(format!("warmup ({}) exceeds iterations ({})", self.warmup, self.iterations));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction must be in (0, 1), got {}", self.train_fraction));
        }
        if self.chains == 0 {
            return bad("chains must be at least 1".into());
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        Ok(())
    }
}

/// One Markov chain and everything needed to continue it.
#[derive(Debug, Clone)]
pub struct Chain {
    pub index: usize,
    pub iteration: usize,
    pub state: ModelState,
    pub rng: RngStream,
    pub accumulator: PredictiveAccumulator,
    pub trace: Vec<TraceRow>,
}

impl Chain {
    /// Fresh chain on its own stream of the config seed.
    pub fn start(
        config: &RunConfig,
        data: &TokenData,
        heldout: &SparseCountMatrix,
        index: usize,
    ) -> Result<Self> {
        let mut rng = RngStream::named(config.seed, StreamName::Chain(index as u32));
        let mut state = initialize(config.variant, data, &config.hyperparams, &mut rng)?;
        if config.warmup == 0 {
            unpin(&mut state);
        }
        Ok(Chain {
            index,
            iteration: 0,
            state,
            rng,
            accumulator: PredictiveAccumulator::for_support(heldout),
            trace: Vec::new(),
        })
    }

    /// One sweep, then collection and tracing for the new iteration.
    pub fn step(
        &mut self,
        config: &RunConfig,
        data: &TokenData,
        heldout: &SparseCountMatrix,
    ) -> Result<()> {
        sweep(&mut self.state, data, &config.hyperparams, &mut self.rng)?;
        self.iteration += 1;
        if self.iteration == config.warmup {
            unpin(&mut self.state);
        }
        let schedule = config.schedule();
        if schedule.collects(self.iteration) {
            self.accumulator.accumulate(&self.state)?;
        }
        let perplexity = if self.accumulator.samples() > 0 && heldout.total_tokens() > 0 {
            Some(self.accumulator.perplexity(heldout)?)
        } else {
            None
        };
        self.trace.push(TraceRow {
            iteration: self.iteration,
            k_active: self.state.active_topics(),
            perplexity,
        });
        Ok(())
    }

    pub fn finished(&self, config: &RunConfig) -> bool {
        self.iteration >= config.iterations
    }

    /// Report at the current iteration; `perplexity` is absent until samples
    /// have been collected.
    pub fn report(&self, config: &RunConfig, heldout: &SparseCountMatrix) -> Result<PerplexityReport> {
        let perplexity = if self.accumulator.samples() > 0 && heldout.total_tokens() > 0 {
            Some(self.accumulator.perplexity(heldout)?)
        } else {
            None
        };
        Ok(PerplexityReport {
            variant: config.variant,
            schedule: config.schedule(),
            samples: self.accumulator.samples(),
            chains: 1,
            heldout_tokens: heldout.total_tokens(),
            perplexity,
            k_active_trace: self.trace.iter().map(|t| t.k_active).collect(),
            param_dumps: ParamDumps::from_state(&self.state),
            diagnostics: self.state.diagnostics.clone(),
        })
    }

    pub fn checkpoint(&self, config: &RunConfig) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            chain: self.index,
            iteration: self.iteration,
            rng: self.rng.state(),
            state: self.state.clone(),
            accumulator: self.accumulator.clone(),
            trace: self.trace.clone(),
        }
    }

    /// Rebuild a chain from a checkpoint, checking it against the data it is
    /// meant to continue on.
    pub fn restore(cp: Checkpoint, data: &TokenData, heldout: &SparseCountMatrix) -> Result<Self> {
        cp.state.check_consistency(data)?;
        if cp.accumulator.num_docs() != heldout.num_docs() || cp.accumulator.num_terms() != heldout.num_terms() {
            return Err(NbpError::Dimension("checkpoint accumulator does not match the held-out set".into()));
        }
        if cp.trace.len() != cp.iteration {
            return Err(NbpError::Dimension(format!(
                "checkpoint at iteration {} has {} trace rows",
                cp.iteration,
                cp.trace.len()
            )));
        }
        Ok(Chain {
            index: cp.chain,
            iteration: cp.iteration,
            state: cp.state,
            rng: RngStream::from_state(cp.rng),
            accumulator: cp.accumulator,
            trace: cp.trace,
        })
    }
}

pub const CHECKPOINT_FORMAT: &str = "nbp-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON snapshot of one chain. Floats round-trip exactly, so resuming from a
/// checkpoint reproduces the uninterrupted run bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub chain: usize,
    pub iteration: usize,
    pub rng: RngState,
    pub state: ModelState,
    pub accumulator: PredictiveAccumulator,
    pub trace: Vec<TraceRow>,
}

impl Checkpoint {
    pub fn from_json(s: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(s)?;
        if cp.format != CHECKPOINT_FORMAT {
            return Err(NbpError::Dimension(format!("not a checkpoint (format {:?})", cp.format)));
        }
        if cp.version != CHECKPOINT_VERSION {
            return Err(NbpError::Dimension(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                cp.version
            )));
        }
        let s = &cp.state;
        let (k, j, v) = (s.num_topics, s.num_docs, s.num_terms);
        let lens = [
            (s.phi.len(), v.checked_mul(k)),
            (s.theta.len(), j.checked_mul(k)),
            (s.n_jk.len(), j.checked_mul(k)),
            (s.n_vk.len(), v.checked_mul(k)),
            (s.b.len(), j.checked_mul(k)),
            (s.tables.len(), j.checked_mul(k)),
            (s.r_atom.len(), Some(k)),
            (s.p_atom.len(), Some(k)),
            (s.pi.len(), Some(k)),
            (s.n_k.len(), Some(k)),
            (s.r_group.len(), Some(j)),
            (s.p_group.len(), Some(j)),
            (s.doc_len.len(), Some(j)),
        ];
        if lens.iter().any(|&(got, want)| Some(got) != want) {
            return Err(NbpError::Dimension("checkpoint state arrays have inconsistent sizes".into()));
        }
        if s.z.iter().any(|&z| z as usize >= k) {
            return Err(NbpError::Dimension("checkpoint assignment outside the topic range".into()));
        }
        if cp.config.hyperparams.k != k || cp.config.variant != s.variant {
            return Err(NbpError::Dimension("checkpoint config disagrees with its state".into()));
        }
        Ok(cp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }
}
