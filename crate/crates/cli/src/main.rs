//! `nbp` — fit, evaluate and simulate negative binomial process topic models.
//!
//! Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure. Failures are
//! reported on stderr as one JSON object.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use nbp::corpus::{load_uci, write_vocab};
use nbp::error::ErrorKind;
use nbp::gibbs::Variant;
use nbp::measures::{simulate_corpus, SimulationSpec};
use nbp::run::{dist_check, evaluate_checkpoint, fit, resume, Checkpoint, FitOptions, RunConfig};
use nbp::NbpError;

#[derive(Parser)]
#[command(name = "nbp", version, about = "Negative binomial process topic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a corpus, run the Gibbs chains and write the run directory.
    Fit(FitArgs),
    /// Held-out perplexity of a saved chain.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Held-out counts (UCI docword format).
        #[arg(long)]
        heldout: PathBuf,
    },
    /// Draw a synthetic corpus with known topics.
    Simulate(SimulateArgs),
    /// Check the distribution kernels against each other and the samplers.
    DistCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        draws: u64,
    },
}

#[derive(Args)]
struct FitArgs {
    /// Corpus in UCI bag-of-words docword format.
    #[arg(long, required_unless_present = "resume", conflicts_with = "resume")]
    docword: Option<PathBuf>,
    #[arg(long, requires = "docword")]
    vocab: Option<PathBuf>,
    /// TOML run config; flags given here override it.
    #[arg(long, conflicts_with = "resume")]
    config: Option<PathBuf>,
    /// Continue the run in this directory from its checkpoints.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Stop every chain after this iteration, leaving checkpoints behind.
    #[arg(long)]
    halt_after: Option<usize>,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Overrides {
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Truncation level K.
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    min_doc_freq: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    lda_alpha: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory for docword.txt, vocab.txt and truth.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    topics: Option<usize>,
    #[arg(long)]
    terms: Option<usize>,
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    doc_len: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: NbpError| e.to_string())
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            variant => c.variant,
            topics => c.hyperparams.k,
            iterations => c.iterations,
            burn_in => c.burn_in,
            warmup => c.warmup,
            thin => c.thin,
            train_fraction => c.train_fraction,
            seed => c.seed,
            chains => c.chains,
            out => c.out_dir,
            min_doc_freq => c.min_doc_freq,
            checkpoint_every => c.checkpoint_every,
            lda_alpha => c.hyperparams.lda_alpha,
        }
    }

    fn any(&self) -> bool {
        self.variant.is_some()
            || self.topics.is_some()
            || self.iterations.is_some()
            || self.burn_in.is_some()
            || self.warmup.is_some()
            || self.thin.is_some()
            || self.train_fraction.is_some()
            || self.seed.is_some()
            || self.chains.is_some()
            || self.out.is_some()
            || self.min_doc_freq.is_some()
            || self.checkpoint_every.is_some()
            || self.lda_alpha.is_some()
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<(), NbpError> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(v)?) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

/// Name the file in I/O errors, which otherwise only carry the OS message.
fn at(path: &Path) -> impl FnOnce(NbpError) -> NbpError + '_ {
    move |e| match e {
        NbpError::Io(io) => NbpError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    }
}

fn run_fit(args: FitArgs) -> Result<ExitCode, NbpError> {
    let opts = FitOptions { halt_after: args.halt_after };
    let outcome = if let Some(dir) = &args.resume {
        if args.overrides.any() {
            return Err(NbpError::Config(
                "a resumed run keeps its saved config; drop the override flags".into(),
            ));
        }
        resume(dir, opts).map_err(at(dir))?
    } else {
        let mut config = match &args.config {
            Some(path) => RunConfig::load(path).map_err(at(path))?,
            None => RunConfig::default(),
        };
        args.overrides.apply(&mut config);
        let docword = args.docword.as_deref().expect("clap enforces --docword");
        let corpus = load_uci(docword, args.vocab.as_deref()).map_err(at(docword))?;
        fit(&config, &corpus, opts)?
    };
    match &outcome.report {
        Some(report) => print_json(report)?,
        None => print_json(&json!({
            "status": "halted",
            "out_dir": outcome.out_dir,
            "iterations": outcome.chain_reports.iter().map(|r| r.k_active_trace.len()).collect::<Vec<_>>(),
        }))?,
    }
    Ok(ExitCode::SUCCESS)
}

fn run_simulate(args: SimulateArgs) -> Result<ExitCode, NbpError> {
    let mut spec = SimulationSpec::default();
    if let Some(v) = args.variant {
        spec.variant = v;
    }
    if let Some(k) = args.topics {
        spec.num_topics = k;
    }
    if let Some(v) = args.terms {
        spec.num_terms = v;
    }
    if let Some(j) = args.docs {
        spec.num_docs = j;
    }
    if let Some(n) = args.doc_len {
        spec.mean_doc_len = n;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    let corpus = simulate_corpus(&spec)?;
    let out: &Path = &args.out;
    fs::create_dir_all(out)?;
    corpus.counts.save_docword(out.join("docword.txt"))?;
    let vocab: Vec<String> = (0..spec.num_terms).map(|v| format!("term{v}")).collect();
    let mut buf = Vec::new();
    write_vocab(&vocab, &mut buf)?;
    fs::write(out.join("vocab.txt"), buf)?;
    let mut truth = serde_json::to_string_pretty(&corpus.truth_json())?;
    truth.push('\n');
    fs::write(out.join("truth.json"), truth)?;
    print_json(&json!({
        "out_dir": out,
        "num_docs": corpus.counts.num_docs(),
        "num_terms": corpus.counts.num_terms(),
        "tokens": corpus.counts.total_tokens(),
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, NbpError> {
    match cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Eval { checkpoint, heldout } => {
            let cp = Checkpoint::load(&checkpoint).map_err(at(&checkpoint))?;
            let heldout = load_uci(&heldout, None).map_err(at(&heldout))?;
            print_json(&evaluate_checkpoint(cp, &heldout)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate(args) => run_simulate(args),
        Command::DistCheck { seed, draws } => {
            let report = dist_check(seed, draws)?;
            print_json(&report)?;
            Ok(if report.all_passed() { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
    }
}

fn fail(kind: &str, code: u8, message: String) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", 1, e.to_string()),
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let (kind, code) = match e.kind() {
                ErrorKind::Usage => ("usage", 1),
                ErrorKind::Data => ("data", 2),
                ErrorKind::Numerical => ("numerical", 3),
            };
            fail(kind, code, e.to_string())
        }
    }
}
