//! Command-line front end. [`run`] takes the argument list and two writers
//! and returns the process exit code:
//!
//! * 0: success, and for `solve`/`sweep` every requested radius certified
//! * 1: ran, but not certified (or nothing found / oracle disagreement)
//! * 2: input error
//! * 3: Q-iteration did not converge

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drsafe::backup::ValueVector;
use drsafe::bundled::{ECC_MODEL_TEXT, REFERENCE_DELTAS, REFERENCE_TABLE};
use drsafe::io::{
    csv_report, format_cell, parse_model, parse_model_str, table_report, LoadedModel,
    ReportDocument, Strictness,
};
use drsafe::iteration::{IterationError, SafetyReport};
use drsafe::oracle::{
    adversarial_model, monte_carlo_hitting, reconcile_reference, three_way_agreement,
    AgreementConfig, OracleError, ReconcileConfig, ReconcileReport, SimConfig,
};
use drsafe::{
    evaluate_safety, sweep_delta, AmbiguitySpec, Execution, IterationConfig, StateId,
    UpdateScheme,
};
use serde_json::json;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CERTIFIED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

/// Agreement tolerance for `oracle-check`.
const AGREEMENT_TOL: f64 = 1e-7;

#[derive(Debug, Parser)]
#[command(name = "drsafe", version, about = "Robust p-safety verification for finite MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a model file
    Validate {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Robust safety bound at one radius
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[command(flatten)]
        iter: IterArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Robust safety bounds over a grid of radii
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated, ascending
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = REFERENCE_DELTAS)]
        deltas: Vec<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[command(flatten)]
        iter: IterArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Breakpoint backup vs. epigraph LP vs. primal LP on random instances
    OracleCheck {
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 6)]
        max_states: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        sequential: bool,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Search terminal rows for kernels matching a target zero-radius row
    Reconcile {
        #[command(flatten)]
        model: ModelArgs,
        /// Target values per taboo state (defaults to the bundled reference row)
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        target: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.05)]
        grid_step: f64,
        #[arg(long, default_value_t = 5e-4)]
        tolerance: f64,
        #[arg(long)]
        p: Option<f64>,
        /// Candidates to print in detail
        #[arg(long, default_value_t = 3)]
        top: usize,
        #[command(flatten)]
        iter: IterArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Monte Carlo probability of hitting a forbidden state before a goal
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Start state (all taboo states when omitted)
        #[arg(long)]
        start: Option<i64>,
        #[arg(long, default_value_t = 100_000)]
        trajectories: usize,
        #[arg(long, default_value_t = 10_000)]
        step_cap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulate the worst-case kernel for this radius instead of the nominal one
        #[arg(long)]
        adversarial_delta: Option<f64>,
        #[command(flatten)]
        iter: IterArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model file (the bundled example when omitted)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Reject unknown fields (default)
    #[arg(long, conflicts_with = "lax")]
    strict: bool,
    /// Warn about unknown fields instead of rejecting them
    #[arg(long)]
    lax: bool,
}

#[derive(Debug, Args)]
struct IterArgs {
    #[arg(long, default_value_t = 1e-8)]
    theta: f64,
    #[arg(long, default_value_t = 100_000)]
    max_sweeps: usize,
    #[arg(long, value_enum, default_value_t = Scheme::Jacobi)]
    scheme: Scheme,
    /// Run on one thread
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scheme {
    Jacobi,
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Report,
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

impl IterArgs {
    fn config(&self) -> IterationConfig {
        IterationConfig {
            theta: self.theta,
            max_sweeps: self.max_sweeps,
            scheme: match self.scheme {
                Scheme::Jacobi => UpdateScheme::Jacobi,
                Scheme::GaussSeidel => UpdateScheme::GaussSeidel,
            },
            execution: execution(self.sequential),
        }
    }
}

#[derive(Debug)]
struct CliError {
    code: i32,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn input(message: impl ToString) -> Self {
        Self {
            code: EXIT_INPUT,
            kind: "input",
            message: message.to_string(),
        }
    }
}

impl From<IterationError> for CliError {
    fn from(e: IterationError) -> Self {
        match e {
            IterationError::NotConverged { .. } => Self {
                code: EXIT_NOT_CONVERGED,
                kind: "not-converged",
                message: e.to_string(),
            },
            other => Self::input(other),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Iteration(inner) => inner.into(),
            OracleError::NoCandidate { .. } => Self {
                code: EXIT_NOT_CERTIFIED,
                kind: "no-candidate",
                message: e.to_string(),
            },
            other => Self::input(other),
        }
    }
}

type Outcome = Result<i32, CliError>;

fn load(args: &ModelArgs, err: &mut dyn Write) -> Result<LoadedModel, CliError> {
    let strictness = if args.lax {
        Strictness::Lax
    } else {
        Strictness::Strict
    };
    let loaded = match &args.model {
        Some(path) => parse_model(path, strictness),
        None => parse_model_str(ECC_MODEL_TEXT, strictness),
    }
    .map_err(CliError::input)?;
    for w in &loaded.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    Ok(loaded)
}

fn safety_level(flag: Option<f64>, loaded: &LoadedModel) -> Result<f64, CliError> {
    flag.or(loaded.defaults.p)
        .ok_or_else(|| CliError::input("no safety level given; pass --p"))
}

fn emit_reports(
    out: &mut dyn Write,
    format: Format,
    loaded: &LoadedModel,
    p: f64,
    reports: &[SafetyReport],
) -> std::io::Result<()> {
    match format {
        Format::Table => out.write_all(table_report(reports).as_bytes()),
        Format::Csv => out.write_all(csv_report(reports).as_bytes()),
        Format::Report => {
            out.write_all(ReportDocument::new(&loaded.digest(), p, reports).to_json().as_bytes())
        }
    }
}

fn certified_code(reports: &[SafetyReport]) -> i32 {
    if reports.iter().all(|r| r.mdp_safe) {
        EXIT_OK
    } else {
        EXIT_NOT_CERTIFIED
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError {
        code: EXIT_INPUT,
        kind: "io",
        message: e.to_string(),
    }
}

fn validate(model: &ModelArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let loaded = load(model, err)?;
    let m = &loaded.model;
    writeln!(
        out,
        "ok: {} states ({} taboo), {} actions, {} transitions\ndigest: {}",
        m.num_states(),
        m.num_taboo(),
        m.num_actions(),
        loaded.document.transitions.len(),
        loaded.digest()
    )
    .map_err(io_err)?;
    Ok(EXIT_OK)
}

fn solve(
    model: &ModelArgs,
    delta: Option<f64>,
    p: Option<f64>,
    iter: &IterArgs,
    format: Format,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let loaded = load(model, err)?;
    let p = safety_level(p, &loaded)?;
    let delta = delta.or(loaded.defaults.delta).unwrap_or(0.0);
    let spec = AmbiguitySpec::new(delta, loaded.metric.clone()).map_err(CliError::input)?;
    let report = evaluate_safety(&loaded.model, &loaded.policy, &spec, p, &iter.config())?;
    let reports = [report];
    emit_reports(out, format, &loaded, p, &reports).map_err(io_err)?;
    Ok(certified_code(&reports))
}

fn sweep(
    model: &ModelArgs,
    deltas: &[f64],
    p: Option<f64>,
    iter: &IterArgs,
    format: Format,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let loaded = load(model, err)?;
    let p = safety_level(p, &loaded)?;
    let reports = sweep_delta(
        &loaded.model,
        &loaded.policy,
        &loaded.metric,
        deltas,
        p,
        &iter.config(),
    )?;
    emit_reports(out, format, &loaded, p, &reports).map_err(io_err)?;
    Ok(certified_code(&reports))
}

fn oracle_check(cfg: AgreementConfig, format: Format, out: &mut dyn Write) -> Outcome {
    if cfg.max_states < 2 {
        return Err(CliError::input("--max-states must be at least 2"));
    }
    let s = three_way_agreement(&cfg);
    let pass = s.failures.is_empty() && s.max_gap() <= AGREEMENT_TOL;
    let text = match format {
        Format::Report => serde_json::to_string_pretty(&json!({
            "summary": s,
            "tolerance": AGREEMENT_TOL,
            "pass": pass,
        }))
        .expect("summary serializes")
            + "\n",
        Format::Csv => format!(
            "instances,breakpoint_vs_epigraph,breakpoint_vs_primal,epigraph_vs_primal,failures,pass\n{},{:e},{:e},{:e},{},{}\n",
            s.instances,
            s.max_breakpoint_vs_epigraph,
            s.max_breakpoint_vs_primal,
            s.max_epigraph_vs_primal,
            s.failures.len(),
            pass
        ),
        Format::Table => format!(
            "instances: {}\nbreakpoint vs epigraph: {:e}\nbreakpoint vs primal: {:e}\nepigraph vs primal: {:e}\nfailed instances: {}\n{}\n",
            s.instances,
            s.max_breakpoint_vs_epigraph,
            s.max_breakpoint_vs_primal,
            s.max_epigraph_vs_primal,
            s.failures.len(),
            if pass { "agreement within 1e-7" } else { "DISAGREEMENT" }
        ),
    };
    out.write_all(text.as_bytes()).map_err(io_err)?;
    Ok(if pass { EXIT_OK } else { EXIT_NOT_CERTIFIED })
}

fn reconcile_text(report: &ReconcileReport, top: usize) -> String {
    let mut s = String::new();
    s.push_str("adjustable rows:\n");
    for r in &report.adjustable {
        s.push_str(&format!(
            "  state {} action {}: goal {}, forbidden {}\n",
            r.state, r.action, r.goal, r.forbidden
        ));
    }
    s.push_str(&format!(
        "grid points per row: {}\ncandidates: {}\n",
        report.grid_points,
        report.candidates.len()
    ));
    for (i, c) in report.candidates.iter().take(top).enumerate() {
        let settings: Vec<String> = c
            .settings
            .iter()
            .map(|r| format!("P[{},{}](forbidden)={}", r.state, r.action, r.forbidden_mass))
            .collect();
        s.push_str(&format!("\ncandidate {}: {}\n", i + 1, settings.join(" ")));
        s.push_str(&format!(
            "  zero-radius deviation: {:e}\n  max deviation (delta > 0): {}\n  largest certified delta: {}\n",
            c.row0_deviation,
            format_cell(c.max_deviation),
            c.largest_certified_delta
                .map_or("none".to_string(), |d| d.to_string())
        ));
        if !c.deviations.is_empty() {
            let states: Vec<String> =
                c.row0.states().iter().map(|x| format!("{:>6}", format!("d({x})"))).collect();
            s.push_str(&format!("  delta  {}\n", states.join("  ")));
            for (d, dev) in &c.deviations {
                let cells: Vec<String> = dev.iter().map(|&v| format_cell(v)).collect();
                s.push_str(&format!("  {d:<5}  {}\n", cells.join("  ")));
            }
        }
    }
    s
}

fn reconcile_csv(report: &ReconcileReport) -> String {
    let mut s = String::from("candidate");
    if let Some(c) = report.candidates.first() {
        for r in &c.settings {
            s.push_str(&format!(",P[{};{}]", r.state, r.action));
        }
    }
    s.push_str(",zero_radius_deviation,max_deviation,largest_certified_delta\n");
    for (i, c) in report.candidates.iter().enumerate() {
        s.push_str(&(i + 1).to_string());
        for r in &c.settings {
            s.push_str(&format!(",{}", r.forbidden_mass));
        }
        s.push_str(&format!(
            ",{:e},{},{}\n",
            c.row0_deviation,
            format_cell(c.max_deviation),
            c.largest_certified_delta
                .map_or(String::new(), |d| d.to_string())
        ));
    }
    s
}

fn reconcile_json(report: &ReconcileReport, digest: &str) -> String {
    let candidates: Vec<_> = report
        .candidates
        .iter()
        .map(|c| {
            json!({
                "settings": c.settings,
                "zero_radius": c.row0.iter().map(|(x, v)| json!({"state": x, "s": v})).collect::<Vec<_>>(),
                "zero_radius_deviation": c.row0_deviation,
                "deviations": c.deviations.iter().map(|(d, dev)| json!({"delta": d, "deviation": dev})).collect::<Vec<_>>(),
                "max_deviation": c.max_deviation,
                "largest_certified_delta": c.largest_certified_delta,
            })
        })
        .collect();
    serde_json::to_string_pretty(&json!({
        "input_digest": digest,
        "adjustable": report.adjustable,
        "grid_points": report.grid_points,
        "candidates": candidates,
    }))
    .expect("report serializes")
        + "\n"
}

#[allow(clippy::too_many_arguments)]
fn reconcile(
    model: &ModelArgs,
    target: Option<&[f64]>,
    grid_step: f64,
    tolerance: f64,
    p: Option<f64>,
    top: usize,
    iter: &IterArgs,
    format: Format,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let loaded = load(model, err)?;
    let p = safety_level(p, &loaded)?;
    let nt = loaded.model.num_taboo();
    let bundled_shape = nt == REFERENCE_TABLE[0].len();
    let target = match target {
        Some(t) => t.to_vec(),
        None if bundled_shape => REFERENCE_TABLE[0].to_vec(),
        None => {
            return Err(CliError::input(format!(
                "pass --target with {nt} values for this model"
            )))
        }
    };
    // the bundled reference sweep is compared whenever the shapes line up
    let reference: Vec<(f64, Vec<f64>)> = if bundled_shape {
        REFERENCE_DELTAS
            .iter()
            .zip(REFERENCE_TABLE)
            .map(|(&d, row)| (d, row.to_vec()))
            .collect()
    } else {
        Vec::new()
    };
    let cfg = ReconcileConfig {
        grid_step,
        tolerance,
        p,
        iteration: iter.config(),
    };
    let report = reconcile_reference(
        &loaded.model,
        &loaded.policy,
        &loaded.metric,
        &target,
        &reference,
        &cfg,
    )?;
    let text = match format {
        Format::Table => reconcile_text(&report, top),
        Format::Csv => reconcile_csv(&report),
        Format::Report => reconcile_json(&report, &loaded.digest()),
    };
    out.write_all(text.as_bytes()).map_err(io_err)?;
    Ok(EXIT_OK)
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    model: &ModelArgs,
    start: Option<i64>,
    sim: SimConfig,
    adversarial_delta: Option<f64>,
    iter: &IterArgs,
    format: Format,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Outcome {
    let loaded = load(model, err)?;
    let starts = match start {
        Some(s) => {
            let id = StateId(s);
            match loaded.model.state_index(id) {
                Some(_) => vec![id],
                None => return Err(CliError::input(format!("unknown state {s}"))),
            }
        }
        None => loaded.model.taboo_states(),
    };
    let (kernel, bound) = match adversarial_delta {
        Some(delta) => {
            let spec = AmbiguitySpec::new(delta, loaded.metric.clone()).map_err(CliError::input)?;
            // the bound's own p is irrelevant here
            let report = evaluate_safety(&loaded.model, &loaded.policy, &spec, 0.5, &iter.config())?;
            let values = ValueVector::from_continuation(&loaded.model, report.j.values());
            (adversarial_model(&loaded.model, &spec, &values)?, Some(report.j))
        }
        None => (loaded.model.clone(), None),
    };
    let mut rows = Vec::new();
    for &s in &starts {
        let est = monte_carlo_hitting(&kernel, &loaded.policy, s, &sim)?;
        rows.push((s, est, bound.as_ref().and_then(|j| j.get(s))));
    }
    let text = match format {
        Format::Report => {
            let entries: Vec<_> = rows
                .iter()
                .map(|(s, est, j)| json!({"state": s, "estimate": est, "bound": j}))
                .collect();
            serde_json::to_string_pretty(&json!({
                "input_digest": loaded.digest(),
                "seed": sim.seed,
                "adversarial_delta": adversarial_delta,
                "results": entries,
            }))
            .expect("report serializes")
                + "\n"
        }
        Format::Csv | Format::Table => {
            let sep = if format == Format::Csv { "," } else { "  " };
            let mut s = ["state", "estimate", "stderr", "hits", "censored", "bound"].join(sep);
            s.push('\n');
            for (x, est, j) in &rows {
                let cells = [
                    x.to_string(),
                    format!("{:.6}", est.estimate),
                    format!("{:.6}", est.stderr),
                    est.hits.to_string(),
                    est.censored.to_string(),
                    j.map_or(String::new(), |v| format!("{v:.6}")),
                ];
                s.push_str(&cells.join(sep));
                s.push('\n');
            }
            s
        }
    };
    out.write_all(text.as_bytes()).map_err(io_err)?;
    Ok(EXIT_OK)
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    match cli.command {
        Command::Validate { model } => validate(&model, out, err),
        Command::Solve {
            model,
            delta,
            p,
            iter,
            format,
        } => solve(&model, delta, p, &iter, format, out, err),
        Command::Sweep {
            model,
            deltas,
            p,
            iter,
            format,
        } => sweep(&model, &deltas, p, &iter, format, out, err),
        Command::OracleCheck {
            instances,
            max_states,
            seed,
            sequential,
            format,
        } => oracle_check(
            AgreementConfig {
                instances,
                max_states,
                seed,
                execution: execution(sequential),
            },
            format,
            out,
        ),
        Command::Reconcile {
            model,
            target,
            grid_step,
            tolerance,
            p,
            top,
            iter,
            format,
        } => reconcile(
            &model,
            target.as_deref(),
            grid_step,
            tolerance,
            p,
            top,
            &iter,
            format,
            out,
            err,
        ),
        Command::Simulate {
            model,
            start,
            trajectories,
            step_cap,
            seed,
            adversarial_delta,
            iter,
            format,
        } => simulate(
            &model,
            start,
            SimConfig {
                trajectories,
                step_cap,
                seed,
                execution: execution(iter.sequential),
                ..Default::default()
            },
            adversarial_delta,
            &iter,
            format,
            out,
            err,
        ),
    }
}

fn wants_json(args: &[OsString]) -> bool {
    args.windows(2)
        .any(|w| w[0] == "--format" && w[1] == "report")
        || args.iter().any(|a| a == "--format=report")
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let json_errors = wants_json(&args);
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            if json_errors {
                let doc = json!({"error": {"kind": e.kind, "code": e.code, "message": e.message}});
                let _ = writeln!(err, "{doc}");
            } else {
                let _ = writeln!(err, "error: {}", e.message);
            }
            e.code
        }
    }
}
