use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nbp")).args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
    })
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path) {
    let out = nbp(&["simulate", "--out", s(dir), "--docs", "10", "--terms", "20", "--doc-len", "30", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

const SHORT: [&str; 8] = ["--iterations", "30", "--burn-in", "15", "--warmup", "5", "--topics", "8"];

#[test]
fn simulate_then_fit_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim);
    for f in ["docword.txt", "vocab.txt", "truth.json"] {
        assert!(sim.join(f).is_file());
    }
    let run = tmp.path().join("run");
    let (docword, vocab) = (sim.join("docword.txt"), sim.join("vocab.txt"));
    let mut args = vec!["fit", "--docword", s(&docword), "--vocab", s(&vocab)];
    args.extend(["--variant", "gamma-nb", "--out", s(&run)]);
    args.extend(SHORT);
    let out = nbp(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["variant"], "gamma-nb");
    assert!(report["k_active_final"][0].as_u64().unwrap() <= 8);
    assert!(report["perplexity"].as_f64().unwrap() < 20.0);
    assert!(run.join("vocab.txt").is_file());
}

#[test]
fn fit_on_defaults_after_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let out = nbp(&["simulate", "--out", s(&sim)]);
    assert!(out.status.success());
    // the default schedule is long; a halted run still exercises the defaults
    let run = tmp.path().join("run");
    let out = nbp(&["fit", "--docword", s(&sim.join("docword.txt")), "--out", s(&run), "--halt-after", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["status"], "halted");
    let config = std::fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(config.contains("iterations = 2500"), "{config}");
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        "variant = \"beta-nb\"\niterations = 20\nburn_in = 10\nwarmup = 2\n[hyperparams]\nk = 5\n",
    )
    .unwrap();
    let run = tmp.path().join("run");
    let out = nbp(&[
        "fit", "--docword", s(&tmp.path().join("docword.txt")), "--config", s(&cfg),
        "--variant", "nb-hdp", "--out", s(&run),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert_eq!(report["variant"], "nb-hdp");
    assert_eq!(report["schedule"]["iterations"], 20);
}

#[test]
fn identical_runs_give_identical_reports_and_resume_matches() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let docword = tmp.path().join("docword.txt");
    let fit = |name: &str, extra: &[&str]| {
        let dir = tmp.path().join(name);
        let mut args = vec!["fit", "--docword", s(&docword), "--out", s(&dir), "--chains", "2"];
        args.extend(SHORT);
        args.extend(extra);
        let out = nbp(&args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        dir
    };
    let a = fit("a", &[]);
    let b = fit("b", &[]);
    let c = fit("c", &["--halt-after", "12"]);
    assert!(!c.join("report.json").exists());
    let out = nbp(&["fit", "--resume", s(&c)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let read = |d: &Path| std::fs::read(d.join("report.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a), read(&c));
    assert_eq!(stdout_json(&out), serde_json::from_slice::<Value>(&read(&a)).unwrap());
}

#[test]
fn eval_refuses_checkpoint_in_burn_in() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let run = tmp.path().join("run");
    let docword = tmp.path().join("docword.txt");
    let mut args = vec!["fit", "--docword", s(&docword), "--out", s(&run), "--halt-after", "10"];
    args.extend(SHORT);
    assert!(nbp(&args).status.success());
    let cp = run.join("chain-0/checkpoint.json");
    let heldout = run.join("heldout.docword.txt");
    let out = nbp(&["eval", "--checkpoint", s(&cp), "--heldout", s(&heldout)]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "data");
    assert!(err["message"].as_str().unwrap().contains("no posterior samples"), "{err}");

    assert!(nbp(&["fit", "--resume", s(&run)]).status.success());
    let out = nbp(&["eval", "--checkpoint", s(&cp), "--heldout", s(&heldout)]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert_eq!(report["samples"], 15);
    assert!(report["perplexity"].as_f64().unwrap() > 1.0);
}

#[test]
fn dist_check_exit_status_follows_the_suites() {
    let out = nbp(&["dist-check", "--draws", "100000"]);
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    assert_eq!(report["suites"].as_array().unwrap().len(), 8);

    let out = nbp(&["dist-check", "--draws", "50"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_one() {
    let out = nbp(&["fit", "--docword", "x.txt", "--variant", "no-such-model"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "usage");
    assert!(err["message"].as_str().unwrap().contains("no-such-model"));

    assert_eq!(nbp(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(nbp(&["fit"]).status.code(), Some(1));
    assert_eq!(nbp(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_config_values_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let docword = tmp.path().join("docword.txt");
    let out = nbp(&["fit", "--docword", s(&docword), "--iterations", "10", "--burn-in", "10", "--out", s(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["error"], "usage");
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.txt");
    let out = nbp(&["fit", "--docword", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("missing.txt"));

    let bad = tmp.path().join("bad.txt");
    std::fs::write(&bad, "2\n3\n2\n1 1 4\n1 1 2\n").unwrap();
    let out = nbp(&["fit", "--docword", s(&bad), "--out", s(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "data");
}
