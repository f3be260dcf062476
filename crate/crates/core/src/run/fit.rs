//! Fitting a corpus end to end and the versioned output directory.
//!
//! ```text
//! <out>/manifest.json          layout version and file list
//! <out>/config.toml            the resolved run config
//! <out>/train.docword.txt      training tokens (UCI format)
//! <out>/heldout.docword.txt    held-out tokens
//! <out>/vocab.txt              vocabulary, when one was given
//! <out>/report.json            merged report across chains
//! <out>/chain-<i>/             trace.csv, report.json, checkpoint.json,
//!                              atoms.csv, docs.csv
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Chain, Checkpoint, RunConfig};
use crate::corpus::{load_uci, split_holdout, write_vocab, SparseCountMatrix};
use crate::error::{NbpError, Result};
use crate::eval::{merged_perplexity, trace_csv, PerplexityReport, Schedule};
use crate::gibbs::{TokenData, Variant};

pub const LAYOUT_VERSION: u32 = 1;

const TRAIN_FILE: &str = "train.docword.txt";
const HELDOUT_FILE: &str = "heldout.docword.txt";
const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitOptions {
    /// Stop every chain after this iteration (leaving a checkpoint).
    pub halt_after: Option<usize>,
}

/// Summary over all chains of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedReport {
    pub layout_version: u32,
    pub variant: Variant,
    pub schedule: Schedule,
    pub seed: u64,
    pub num_docs: usize,
    pub num_terms: usize,
    pub train_tokens: u64,
    pub heldout_tokens: u64,
    pub chains: usize,
    pub samples_per_chain: Vec<u64>,
    /// Perplexity under `f` averaged over chains.
    pub perplexity: Option<f64>,
    pub chain_perplexity: Vec<Option<f64>>,
    pub k_active_final: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub out_dir: PathBuf,
    /// All chains reached the configured number of iterations.
    pub completed: bool,
    pub report: Option<MergedReport>,
    pub chain_reports: Vec<PerplexityReport>,
}

#[derive(Serialize)]
struct Manifest {
    layout_version: u32,
    variant: Variant,
    chains: usize,
    files: Vec<String>,
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn chain_dir(out: &Path, i: usize) -> PathBuf {
    out.join(format!("chain-{i}"))
}

/// Split `corpus`, write the run directory, and run every chain. Refuses to
/// reuse a directory that already holds a run.
pub fn fit(config: &RunConfig, corpus: &SparseCountMatrix, opts: FitOptions) -> Result<FitOutcome> {
    config.validate()?;
    let out = &config.out_dir;
    if out.join("manifest.json").exists() {
        return Err(NbpError::Config(format!(
            "{} already holds a run; resume it or choose another directory",
            out.display()
        )));
    }
    let corpus = if config.min_doc_freq > 1 {
        corpus.filter_min_doc_freq(config.min_doc_freq).0
    } else {
        corpus.clone()
    };
    let split = split_holdout(&corpus, config.train_fraction, config.seed)?;
    fs::create_dir_all(out)?;
    write_atomic(&out.join("config.toml"), &config.to_toml())?;
    split.train.save_docword(out.join(TRAIN_FILE))?;
    split.heldout.save_docword(out.join(HELDOUT_FILE))?;
    let mut files = vec!["config.toml".to_string(), TRAIN_FILE.into(), HELDOUT_FILE.into()];
    if let Some(vocab) = corpus.vocab() {
        let mut buf = Vec::new();
        write_vocab(vocab, &mut buf)?;
        fs::write(out.join(VOCAB_FILE), buf)?;
        files.push(VOCAB_FILE.into());
    }
    files.push("report.json".into());
    for i in 0..config.chains {
        fs::create_dir_all(chain_dir(out, i))?;
        files.push(format!("chain-{i}/"));
    }
    let manifest = Manifest {
        layout_version: LAYOUT_VERSION,
        variant: config.variant,
        chains: config.chains,
        files,
    };
    write_atomic(&out.join("manifest.json"), &to_json(&manifest))?;
    run_chains(config, &split.train, &split.heldout, opts, false)
}

/// Continue the run in `out_dir` from its checkpoints.
pub fn resume(out_dir: impl AsRef<Path>, opts: FitOptions) -> Result<FitOutcome> {
    let out = out_dir.as_ref();
    if !out.join("manifest.json").exists() {
        return Err(NbpError::Config(format!("{} does not hold a run", out.display())));
    }
    let mut config = RunConfig::load(out.join("config.toml"))?;
    config.out_dir = out.to_path_buf();
    config.validate()?;
    let vocab_path = out.join(VOCAB_FILE);
    let vocab = vocab_path.exists().then_some(vocab_path.as_path());
    let train = load_uci(out.join(TRAIN_FILE), vocab)?;
    let heldout = load_uci(out.join(HELDOUT_FILE), None)?;
    run_chains(&config, &train, &heldout, opts, true)
}

fn run_chains(
    config: &RunConfig,
    train: &SparseCountMatrix,
    heldout: &SparseCountMatrix,
    opts: FitOptions,
    from_checkpoints: bool,
) -> Result<FitOutcome> {
    let data = TokenData::from_matrix(train);
    let out = &config.out_dir;
    let results: Vec<Result<Chain>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.chains)
            .map(|i| {
                let data = &data;
                scope.spawn(move || {
                    let cp_path = chain_dir(out, i).join("checkpoint.json");
                    let chain = if from_checkpoints && cp_path.exists() {
                        let cp = Checkpoint::load(&cp_path)?;
                        if cp.chain != i || !same_run(&cp.config, config) {
                            return Err(NbpError::Config(format!(
                                "{} belongs to a different run",
                                cp_path.display()
                            )));
                        }
                        Chain::restore(cp, data, heldout)?
                    } else {
                        Chain::start(config, data, heldout, i)?
                    };
                    drive(config, data, heldout, chain, opts, &chain_dir(out, i))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    });
    let chains = results.into_iter().collect::<Result<Vec<_>>>()?;

    let completed = chains.iter().all(|c| c.finished(config));
    let mut chain_reports = Vec::with_capacity(chains.len());
    for c in &chains {
        let report = c.report(config, heldout)?;
        let dir = chain_dir(out, c.index);
        write_atomic(&dir.join("report.json"), &to_json(&report))?;
        chain_reports.push(report);
    }
    let report = if completed {
        let accs: Vec<_> = chains.iter().map(|c| c.accumulator.clone()).collect();
        let perplexity = if heldout.total_tokens() > 0 {
            Some(merged_perplexity(&accs, heldout)?)
        } else {
            None
        };
        let merged = MergedReport {
            layout_version: LAYOUT_VERSION,
            variant: config.variant,
            schedule: config.schedule(),
            seed: config.seed,
            num_docs: train.num_docs(),
            num_terms: train.num_terms(),
            train_tokens: train.total_tokens(),
            heldout_tokens: heldout.total_tokens(),
            chains: chains.len(),
            samples_per_chain: chains.iter().map(|c| c.accumulator.samples()).collect(),
            perplexity,
            chain_perplexity: chain_reports.iter().map(|r| r.perplexity).collect(),
            k_active_final: chains.iter().map(|c| c.state.active_topics()).collect(),
        };
        write_atomic(&out.join("report.json"), &to_json(&merged))?;
        Some(merged)
    } else {
        None
    };
    Ok(FitOutcome {
        out_dir: out.clone(),
        completed,
        report,
        chain_reports,
    })
}

/// Configs agree on everything that affects the trajectory.
fn same_run(a: &RunConfig, b: &RunConfig) -> bool {
    let strip = |c: &RunConfig| RunConfig {
        out_dir: PathBuf::new(),
        checkpoint_every: 0,
        ..c.clone()
    };
    strip(a) == strip(b)
}

fn drive(
    config: &RunConfig,
    data: &TokenData,
    heldout: &SparseCountMatrix,
    mut chain: Chain,
    opts: FitOptions,
    dir: &Path,
) -> Result<Chain> {
    let stop = opts.halt_after.unwrap_or(usize::MAX).min(config.iterations);
    let save = |chain: &Chain| -> Result<()> {
        write_atomic(&dir.join("checkpoint.json"), &chain.checkpoint(config).to_json())?;
        write_atomic(&dir.join("trace.csv"), &trace_csv(&chain.trace))
    };
    while chain.iteration < stop {
        chain.step(config, data, heldout)?;
        if config.checkpoint_every > 0 && chain.iteration % config.checkpoint_every == 0 {
            save(&chain)?;
        }
    }
    save(&chain)?;
    let dumps = crate::eval::ParamDumps::from_state(&chain.state);
    write_atomic(&dir.join("atoms.csv"), &dumps.atoms_csv())?;
    write_atomic(&dir.join("docs.csv"), &dumps.groups_csv())?;
    Ok(chain)
}

/// Report for a saved chain against a held-out matrix. Fails with
/// `NoSamples` while the chain is still in burn-in.
pub fn evaluate_checkpoint(cp: Checkpoint, heldout: &SparseCountMatrix) -> Result<PerplexityReport> {
    if cp.accumulator.samples() == 0 {
        return Err(NbpError::NoSamples(format!(
            "checkpoint is at iteration {} and collection starts after iteration {}",
            cp.iteration, cp.config.burn_in
        )));
    }
    let config = cp.config.clone();
    let chain = Chain {
        index: cp.chain,
        iteration: cp.iteration,
        state: cp.state,
        rng: crate::distributions::RngStream::from_state(cp.rng),
        accumulator: cp.accumulator,
        trace: cp.trace,
    };
    chain.report(&config, heldout)
}
