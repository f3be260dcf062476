use std::fs;

use nbp::corpus::load_uci;
use nbp::gibbs::{Hyperparams, Variant};
use nbp::measures::{simulate_corpus, SimulationSpec};
use nbp::run::{evaluate_checkpoint, fit, resume, Checkpoint, FitOptions, RunConfig};
use nbp::NbpError;

fn corpus() -> nbp::corpus::SparseCountMatrix {
    simulate_corpus(&SimulationSpec {
        variant: Variant::GammaNb,
        num_docs: 12,
        num_terms: 20,
        mean_doc_len: 30.0,
        seed: 4,
        ..SimulationSpec::default()
    })
    .unwrap()
    .counts
}

fn config(dir: &std::path::Path, variant: Variant) -> RunConfig {
    RunConfig {
        variant,
        out_dir: dir.to_path_buf(),
        iterations: 20,
        burn_in: 10,
        warmup: 5,
        checkpoint_every: 4,
        seed: 4,
        hyperparams: Hyperparams { k: 6, ..Hyperparams::default() },
        ..RunConfig::default()
    }
}

#[test]
fn fit_writes_the_documented_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = fit(&config(&dir, Variant::GammaNb), &corpus(), FitOptions::default()).unwrap();
    assert!(out.completed);
    let report = out.report.unwrap();
    assert_eq!(report.samples_per_chain, vec![10]);
    assert!(report.perplexity.unwrap() < 20.0);
    for f in ["manifest.json", "config.toml", "train.docword.txt", "heldout.docword.txt", "report.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    for f in ["trace.csv", "report.json", "checkpoint.json", "atoms.csv", "docs.csv"] {
        assert!(dir.join("chain-0").join(f).is_file(), "{f}");
    }
    let trace = fs::read_to_string(dir.join("chain-0/trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 21);
    assert!(fs::read_to_string(dir.join("chain-0/atoms.csv")).unwrap().starts_with("atom,tokens,r,p,pi\n"));

    // train + held-out reassemble the corpus
    let train = load_uci(dir.join("train.docword.txt"), None).unwrap();
    let heldout = load_uci(dir.join("heldout.docword.txt"), None).unwrap();
    assert_eq!(train.add(&heldout).unwrap(), corpus());

    let saved = RunConfig::load(dir.join("config.toml")).unwrap();
    assert_eq!(saved, config(&dir, Variant::GammaNb));
}

#[test]
fn fit_refuses_an_existing_run() {
    let tmp = tempfile::tempdir().unwrap();
    let c = config(tmp.path(), Variant::Nb);
    fit(&c, &corpus(), FitOptions::default()).unwrap();
    let err = fit(&c, &corpus(), FitOptions::default()).unwrap_err();
    assert!(matches!(err, NbpError::Config(_)), "{err}");
}

#[test]
fn resume_continues_to_the_same_result() {
    let tmp = tempfile::tempdir().unwrap();
    for variant in [Variant::NbFtm, Variant::DirPfa] {
        let a = tmp.path().join(format!("{variant}-a"));
        let b = tmp.path().join(format!("{variant}-b"));
        fit(&config(&a, variant), &corpus(), FitOptions::default()).unwrap();
        let halted = fit(&config(&b, variant), &corpus(), FitOptions { halt_after: Some(7) }).unwrap();
        assert!(!halted.completed && halted.report.is_none());
        assert!(!b.join("report.json").exists());
        // resuming twice in steps also works
        let again = resume(&b, FitOptions { halt_after: Some(13) }).unwrap();
        assert!(!again.completed);
        let done = resume(&b, FitOptions::default()).unwrap();
        assert!(done.completed);
        assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
        assert_eq!(
            fs::read(a.join("chain-0/trace.csv")).unwrap(),
            fs::read(b.join("chain-0/trace.csv")).unwrap()
        );
    }
}

#[test]
fn resume_requires_a_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(resume(tmp.path(), FitOptions::default()), Err(NbpError::Config(_))));
}

#[test]
fn checkpoint_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let out = fit(&config(&dir, Variant::BetaNb), &corpus(), FitOptions::default()).unwrap();
    let heldout = load_uci(dir.join("heldout.docword.txt"), None).unwrap();
    let cp = Checkpoint::load(dir.join("chain-0/checkpoint.json")).unwrap();
    let report = evaluate_checkpoint(cp, &heldout).unwrap();
    assert_eq!(report.perplexity, out.chain_reports[0].perplexity);

    // a checkpoint still in burn-in has nothing to evaluate
    let early = tmp.path().join("early");
    fit(&config(&early, Variant::BetaNb), &corpus(), FitOptions { halt_after: Some(8) }).unwrap();
    let cp = Checkpoint::load(early.join("chain-0/checkpoint.json")).unwrap();
    assert!(matches!(evaluate_checkpoint(cp, &heldout), Err(NbpError::NoSamples(_))));
}
