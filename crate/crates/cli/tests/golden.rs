use std::io::Write as _;
use std::process::Command;

use drsafe::bundled::ECC_MODEL_TEXT;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("drsafe").chain(args.iter().copied());
    let code = drsafe_cli::run(argv, &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn model_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

const LISTED_CSV: &str = "\
state,0,0.05,0.1,0.15,0.2,0.25,0.3
1,0.3306,0.4078,0.4833,0.5568,0.6285,0.6991,0.7684
2,0.2800,0.3494,0.4169,0.4825,0.5462,0.6120,0.6820
3,0.3813,0.4556,0.5275,0.5969,0.6638,0.7281,0.7900
4,0.3500,0.4000,0.4500,0.5000,0.5500,0.6000,0.6500
5,0.1750,0.2500,0.3250,0.4000,0.4750,0.5500,0.6250
6,0.2625,0.3388,0.4150,0.4912,0.5675,0.6438,0.7200
7,0.5000,0.5500,0.6000,0.6500,0.7000,0.7500,0.8000
verdict,safe,unsafe,unsafe,unsafe,unsafe,unsafe,unsafe
";

#[test]
fn sweep_csv_is_golden_and_deterministic() {
    let args = ["sweep", "--deltas", "0,0.05,0.1,0.15,0.2,0.25,0.3", "--p", "0.5", "--format", "csv"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.code, 1);
    assert_eq!(a.out, LISTED_CSV);
    assert_eq!(a.out.as_bytes(), b.out.as_bytes());
    let seq = run(&[&args[..], &["--sequential"]].concat());
    assert_eq!(seq.out, a.out);
}

#[test]
fn validate_and_solve_exit_codes() {
    assert_eq!(run(&["validate"]).code, 0);
    let zero = run(&["solve", "--delta", "0"]);
    assert_eq!(zero.code, 0, "{}", zero.err);
    assert!(zero.out.contains("largest certified delta: 0"));
    assert_eq!(run(&["solve", "--delta", "0.1"]).code, 1);
    assert_eq!(run(&["solve", "--delta", "0", "--p", "0.4"]).code, 1);
    assert_eq!(run(&["sweep", "--deltas", "0"]).code, 0);
    assert_eq!(run(&["sweep"]).code, 1);
}

#[test]
fn input_errors_exit_two() {
    assert_eq!(run(&["sweep", "--model", "/no/such/file.json"]).code, 2);
    assert_eq!(run(&["sweep", "--bogus"]).code, 2);
    assert_eq!(run(&[]).code, 2);
    assert_eq!(run(&["solve", "--p", "1.5"]).code, 2);
    assert_eq!(run(&["solve", "--delta", "-1"]).code, 2);
    assert_eq!(run(&["sweep", "--deltas", "0.2,0.1"]).code, 2);
    assert_eq!(run(&["sweep", "--scheme", "newton"]).code, 2);
    assert_eq!(run(&["simulate", "--start", "99"]).code, 2);
    assert_eq!(run(&["oracle-check", "--max-states", "1"]).code, 2);
    assert_eq!(run(&["solve", "--theta", "0"]).code, 2);
}

#[test]
fn malformed_files_name_the_problem() {
    let f = model_file("{\n  \"states\": [,\n}");
    let r = run(&["validate", "--model", f.path().to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("line 2"), "{}", r.err);

    let no_policy = ECC_MODEL_TEXT.replace(
        "    {\"state\": 7, \"action\": 1, \"prob\": 0.5},\n    {\"state\": 7, \"action\": 2, \"prob\": 0.5}\n",
        "",
    );
    let no_policy = no_policy.replace("\"prob\": 0.5},\n  ],", "\"prob\": 0.5}\n  ],");
    let f = model_file(&no_policy);
    let r = run(&["validate", "--model", f.path().to_str().unwrap()]);
    assert_eq!(r.code, 2);
    assert!(r.err.contains("state 7"), "{}", r.err);
}

#[test]
fn strict_and_lax_unknown_fields() {
    let text = ECC_MODEL_TEXT.replacen('{', "{\n  \"comment\": \"extra\",", 1);
    let f = model_file(&text);
    let path = f.path().to_str().unwrap();
    let strict = run(&["validate", "--model", path]);
    assert_eq!(strict.code, 2);
    assert!(strict.err.contains("comment"), "{}", strict.err);
    assert_eq!(run(&["validate", "--model", path, "--strict"]).code, 2);
    let lax = run(&["validate", "--model", path, "--lax"]);
    assert_eq!(lax.code, 0);
    assert!(lax.err.contains("warning"));
}

#[test]
fn non_convergence_exits_three() {
    let r = run(&["solve", "--delta", "0.1", "--max-sweeps", "2"]);
    assert_eq!(r.code, 3);
    let r = run(&["sweep", "--max-sweeps", "2", "--format", "report"]);
    assert_eq!(r.code, 3);
    let err: serde_json::Value = serde_json::from_str(r.err.trim()).unwrap();
    assert_eq!(err["error"]["kind"], "not-converged");
}

#[test]
fn report_format_carries_digest_and_diagnostics() {
    let r = run(&["sweep", "--deltas", "0,0.1", "--format", "report"]);
    assert_eq!(r.code, 1);
    let doc: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    let digest = run(&["validate"]).out;
    assert!(digest.contains(doc["input_digest"].as_str().unwrap()));
    assert_eq!(doc["deltas"], serde_json::json!([0.0, 0.1]));
    assert_eq!(doc["largest_certified_delta"], serde_json::json!(0.0));
    let first = &doc["results"][0];
    assert_eq!(first["states"].as_array().unwrap().len(), 7);
    assert_eq!(first["lambdas"].as_array().unwrap().len(), 14);
    assert!(first["sweeps"].as_u64().unwrap() > 0);
    let j1 = first["states"][0]["j"].as_f64().unwrap();
    assert!((j1 - 0.330625).abs() < 1e-9);
}

#[test]
fn other_subcommands() {
    let r = run(&["oracle-check", "--instances", "200"]);
    assert_eq!(r.code, 0, "{}", r.out);
    let r = run(&["reconcile", "--format", "csv"]);
    assert_eq!(r.code, 0);
    assert_eq!(r.out.lines().count(), 76);
    let far = run(&["reconcile", "--target", "0.9,0.08,0.2669,0.1,0.05,0.1837,0.35"]);
    assert_eq!(far.code, 1);
    assert_eq!(run(&["reconcile", "--target", "0.1,0.2"]).code, 2);
    let sim = run(&["simulate", "--start", "1", "--trajectories", "2000", "--format", "csv"]);
    assert_eq!(sim.code, 0);
    assert!(sim.out.starts_with("state,estimate,stderr,hits,censored,bound\n1,"));
    let again = run(&["simulate", "--start", "1", "--trajectories", "2000", "--format", "csv"]);
    assert_eq!(sim.out, again.out);
    let help = run(&["--help"]);
    assert_eq!(help.code, 0);
    assert!(help.out.contains("oracle-check"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_drsafe");
    let code = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(code(&["solve", "--delta", "0"]), Some(0));
    assert_eq!(code(&["solve", "--delta", "0.3"]), Some(1));
    assert_eq!(code(&["sweep", "--model", "/no/such/file"]), Some(2));
    assert_eq!(code(&["solve", "--max-sweeps", "1", "--delta", "0.2"]), Some(3));
}
