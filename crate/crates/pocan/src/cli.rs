//! Command-line frontend. Human-readable tables on stdout by default;
//! `--json` switches to a schema-stable machine-readable document.
//!
//! Exit codes: 0 success, 1 usage error, 2 input validation error,
//! 3 precision infeasibility, 4 internal invariant failure. All
//! diagnostics go to stderr. Machine-readable output never includes
//! timing, so reruns on the same inputs produce identical bytes.

use crate::bounds::{self, GrandCase};
use crate::chain;
use crate::exptime::{self, ExpTimeError, PrecisionMode};
use crate::model::{Config, Dra, Poc};
use crate::newton;
use crate::numeric::{log2_rat, rat_of_f64, rat_to_f64, Rat};
use crate::omega::{self, CheckMode, DivergenceWitness, OmegaError};
use crate::parse;
use crate::reach;
use crate::sim;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::Zero;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Precision(String),
    Internal(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Precision(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m)
            | CliError::Validation(m)
            | CliError::Precision(m)
            | CliError::Internal(m) => f.write_str(m),
        }
    }
}

fn omega_err(e: OmegaError) -> CliError {
    match e {
        OmegaError::AlphabetMismatch(_) | OmegaError::Model(_) => {
            CliError::Validation(e.to_string())
        }
        OmegaError::UnsupportedStart(_) => CliError::Usage(e.to_string()),
        OmegaError::PrecisionInfeasible { .. } | OmegaError::NotStabilized { .. } => {
            CliError::Precision(e.to_string())
        }
        OmegaError::NoWitnessPath { .. } => CliError::Internal(e.to_string()),
    }
}

fn exptime_err(e: ExpTimeError) -> CliError {
    match e {
        ExpTimeError::RigorousInfeasible { .. } | ExpTimeError::NotStabilized { .. } => {
            CliError::Precision(e.to_string())
        }
        ExpTimeError::DegenerateTermination(..) | ExpTimeError::InfiniteDependence(..) => {
            CliError::Internal(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "pocan",
    version,
    about = "quantitative analysis of probabilistic one-counter models"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a model file and check its well-formedness
    Validate(CommonArgs),
    /// Underlying-chain report: components, trends, potentials
    Analyze(CommonArgs),
    /// Termination probabilities
    Term(TermArgs),
    /// Finiteness of conditional expected termination times
    Classify(ClassifyArgs),
    /// Conditional expected termination times
    Exptime(ExptimeArgs),
    /// Divergence probability and witness for one state
    Diverge(DivergeArgs),
    /// Acceptance probability of an omega-regular property
    Mc(McArgs),
    /// Seeded Monte-Carlo estimates
    Simulate(SimArgs),
    /// Bound-formula values instantiated for a model
    Bounds(BoundsArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Model file
    model: PathBuf,
    /// Emit machine-readable JSON
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Adaptive,
    Rigorous,
}

#[derive(Args)]
struct TermArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Restrict to source:target pairs, e.g. p:q,p:r
    #[arg(long)]
    pairs: Option<String>,
    /// Source state (counter 1 implied)
    #[arg(long)]
    from: Option<String>,
    /// Target state
    #[arg(long)]
    to: Option<String>,
    /// Relative error tolerance
    #[arg(long, default_value_t = 1e-6)]
    rel_err: f64,
    #[arg(long, value_enum, default_value = "adaptive")]
    mode: Mode,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Restrict to source:target pairs
    #[arg(long)]
    pairs: Option<String>,
}

#[derive(Args)]
struct ExptimeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Restrict to source:target pairs
    #[arg(long)]
    pairs: Option<String>,
    /// Absolute error tolerance
    #[arg(long, default_value_t = 1e-3)]
    abs_err: f64,
    #[arg(long, value_enum, default_value = "adaptive")]
    mode: Mode,
}

#[derive(Args)]
struct DivergeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// State to analyze (counter 1 implied)
    #[arg(long)]
    from: String,
    /// Relative error tolerance for the numeric value
    #[arg(long, default_value_t = 1e-6)]
    rel_err: f64,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Rabin automaton file
    #[arg(long)]
    dra: PathBuf,
    /// Start configuration <state>[:<counter>], counter 0 or 1
    #[arg(long)]
    from: Option<String>,
    /// Relative error tolerance
    #[arg(long, default_value_t = 1e-6)]
    rel_err: f64,
    #[arg(long, value_enum, default_value = "adaptive")]
    mode: Mode,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Start configuration <state>[:<counter>] (default: first state at 1)
    #[arg(long)]
    from: Option<String>,
    /// Estimate termination into this state instead of the total
    #[arg(long)]
    to: Option<String>,
    /// Rabin automaton file: estimate acceptance instead of termination
    #[arg(long)]
    dra: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 10_000)]
    horizon: u64,
    #[arg(long, default_value_t = 12345)]
    seed: u64,
    /// Trailing window used by the acceptance classifier
    #[arg(long, default_value_t = 100)]
    window: u64,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Absolute error tolerance the error budget is derived for
    #[arg(long, default_value_t = 1e-3)]
    abs_err: f64,
}

/// Entry point for the binary; returns the process exit code.
pub fn main() -> i32 {
    // Die quietly when a downstream pipe closes, like other line-oriented
    // tools, instead of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.code()
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unexpected panic".to_string());
            eprintln!("internal error: {msg}");
            4
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Validate(a) => cmd_validate(a),
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Term(a) => cmd_term(a),
        Cmd::Classify(a) => cmd_classify(a),
        Cmd::Exptime(a) => cmd_exptime(a),
        Cmd::Diverge(a) => cmd_diverge(a),
        Cmd::Mc(a) => cmd_mc(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Bounds(a) => cmd_bounds(a),
    }
}

struct ModelInfo {
    path: String,
    sha256: String,
}

impl ModelInfo {
    fn to_json(&self) -> Value {
        json!({ "path": self.path, "sha256": self.sha256 })
    }
}

fn load_model(path: &Path) -> Result<(Poc, ModelInfo), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let digest = Sha256::digest(text.as_bytes());
    let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
    let m = parse::parse_poc(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok((m, ModelInfo { path: path.display().to_string(), sha256 }))
}

fn load_dra(path: &Path) -> Result<Dra, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    parse::parse_dra(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn parse_state(m: &Poc, s: &str) -> Result<usize, CliError> {
    m.state_index(s)
        .or_else(|| s.parse::<usize>().ok().filter(|&i| i < m.n_states()))
        .ok_or_else(|| CliError::Usage(format!("unknown state {s:?}")))
}

fn parse_from(m: &Poc, s: &str) -> Result<(usize, Option<u64>), CliError> {
    match s.split_once(':') {
        None => Ok((parse_state(m, s)?, None)),
        Some((st, c)) => {
            let counter = c
                .parse::<u64>()
                .map_err(|_| CliError::Usage(format!("bad counter value {c:?}")))?;
            Ok((parse_state(m, st)?, Some(counter)))
        }
    }
}

fn parse_pairs(m: &Poc, s: &str) -> Result<Vec<(usize, usize)>, CliError> {
    s.split(',')
        .map(|tok| {
            let (a, b) = tok
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("bad pair {tok:?}, expected p:q")))?;
            Ok((parse_state(m, a)?, parse_state(m, b)?))
        })
        .collect()
}

fn check_tolerance(v: f64, name: &str) -> Result<(), CliError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{name} must lie strictly between 0 and 1")))
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn emit(json_mode: bool, doc: Value, human: String, timing: &[(&str, f64)]) {
    if json_mode {
        println!("{}", serde_json::to_string_pretty(&doc).expect("serializable report"));
    } else {
        print!("{human}");
        if !timing.is_empty() {
            let parts: Vec<String> =
                timing.iter().map(|(k, v)| format!("{k} {v:.1} ms")).collect();
            println!("timing: {}", parts.join(", "));
        }
    }
}

fn cmd_validate(a: CommonArgs) -> Result<(), CliError> {
    let t0 = Instant::now();
    let (m, info) = load_model(&a.model)?;
    let parse_ms = ms(t0);
    let zero = m.all_zero_rules().count();
    let pos = m.all_pos_rules().count();
    let doc = json!({
        "command": "validate",
        "model": info.to_json(),
        "states": m.n_states(),
        "zero_rules": zero,
        "pos_rules": pos,
        "x_min": rat_to_f64(m.x_min()),
    });
    let human = format!(
        "ok: {} states, {} zero rules, {} positive rules\nminimum rule probability {:.6}\n",
        m.n_states(),
        zero,
        pos,
        rat_to_f64(m.x_min())
    );
    emit(a.json, doc, human, &[("parse", parse_ms)]);
    Ok(())
}

fn cmd_analyze(a: CommonArgs) -> Result<(), CliError> {
    let t0 = Instant::now();
    let (m, info) = load_model(&a.model)?;
    let parse_ms = ms(t0);
    let t1 = Instant::now();
    let ch = chain::underlying_chain(&m);
    let scc = chain::scc_decompose(&ch);
    let analyses =
        chain::bottom_analyses(&ch, &scc).map_err(|e| CliError::Internal(e.to_string()))?;
    let solve_ms = ms(t1);
    let mut components = Vec::new();
    let mut human = String::new();
    let mut bottom_idx = 0;
    for (i, comp) in scc.components.iter().enumerate() {
        let names: Vec<&str> = comp.iter().map(|&s| m.name(s)).collect();
        if scc.is_bottom[i] {
            let an = &analyses[bottom_idx];
            bottom_idx += 1;
            let potentials: serde_json::Map<String, Value> = an
                .states
                .iter()
                .map(|&s| {
                    let v = an.potential_of(s).expect("state inside the component");
                    (m.name(s).to_string(), json!(rat_to_f64(v)))
                })
                .collect();
            components.push(json!({
                "states": names,
                "bottom": true,
                "trend": rat_to_f64(&an.trend),
                "span": rat_to_f64(&an.span),
                "potential": potentials,
            }));
            human.push_str(&format!(
                "bottom component {{{}}}: trend {:.6}, potential span {:.6}\n",
                names.join(", "),
                rat_to_f64(&an.trend),
                rat_to_f64(&an.span)
            ));
        } else {
            components.push(json!({ "states": names, "bottom": false }));
            human.push_str(&format!("transient component {{{}}}\n", names.join(", ")));
        }
    }
    let doc = json!({
        "command": "analyze",
        "model": info.to_json(),
        "states": m.n_states(),
        "x_min": rat_to_f64(m.x_min()),
        "components": components,
    });
    emit(a.json, doc, human, &[("parse", parse_ms), ("solve", solve_ms)]);
    Ok(())
}

fn requested_pairs(
    m: &Poc,
    tpos: &[(usize, usize)],
    pairs: Option<&str>,
    from: Option<&str>,
    to: Option<&str>,
) -> Result<Vec<(usize, usize)>, CliError> {
    if pairs.is_some() && (from.is_some() || to.is_some()) {
        return Err(CliError::Usage(
            "use either --pairs or --from/--to, not both".to_string(),
        ));
    }
    if let Some(s) = pairs {
        return parse_pairs(m, s);
    }
    let src = match from {
        Some(s) => {
            let (p, counter) = parse_from(m, s)?;
            if counter.is_some_and(|c| c != 1) {
                return Err(CliError::Usage(
                    "termination analysis starts at counter 1".to_string(),
                ));
            }
            Some(p)
        }
        None => None,
    };
    let dst = to.map(|s| parse_state(m, s)).transpose()?;
    Ok(tpos
        .iter()
        .copied()
        .filter(|&(p, q)| src.is_none_or(|s| s == p) && dst.is_none_or(|d| d == q))
        .collect())
}

fn cmd_term(a: TermArgs) -> Result<(), CliError> {
    check_tolerance(a.rel_err, "--rel-err")?;
    let t0 = Instant::now();
    let (m, info) = load_model(&a.common.model)?;
    let parse_ms = ms(t0);
    let t1 = Instant::now();
    let tpos = reach::positive_pairs(&m);
    let requested =
        requested_pairs(&m, &tpos, a.pairs.as_deref(), a.from.as_deref(), a.to.as_deref())?;
    let sol = match a.mode {
        Mode::Adaptive => newton::solve_termination(&m, a.rel_err),
        Mode::Rigorous => newton::solve_termination_exact(&m, &rat_of_f64(a.rel_err)),
    };
    let solve_ms = ms(t1);
    let mut rows = Vec::new();
    let mut human = String::new();
    for &(p, q) in &requested {
        let v = sol.prob(p, q);
        let achieved = if v == 0.0 { 0.0 } else { a.rel_err };
        rows.push(json!({
            "p": m.name(p), "q": m.name(q), "prob": v, "rel_err": achieved,
        }));
        human.push_str(&format!("[{} -> {}] = {:.6}\n", m.name(p), m.name(q), v));
    }
    if a.pairs.is_none() && a.to.is_none() {
        let sources: Vec<usize> = match a.from.as_deref() {
            Some(s) => vec![parse_from(&m, s)?.0],
            None => (0..m.n_states()).collect(),
        };
        for p in sources {
            human.push_str(&format!(
                "[{} -> *] = {:.6}\n",
                m.name(p),
                sol.termination_total(p)
            ));
        }
    }
    let doc = json!({
        "command": "term",
        "model": info.to_json(),
        "pairs": rows,
    });
    emit(a.common.json, doc, human, &[("parse", parse_ms), ("solve", solve_ms)]);
    Ok(())
}

fn cmd_classify(a: ClassifyArgs) -> Result<(), CliError> {
    let t0 = Instant::now();
    let (m, info) = load_model(&a.common.model)?;
    let parse_ms = ms(t0);
    let t1 = Instant::now();
    let tpos = reach::positive_pairs(&m);
    let report = exptime::classify_finiteness(&m, &tpos);
    let requested = match a.pairs.as_deref() {
        Some(s) => parse_pairs(&m, s)?,
        None => tpos.clone(),
    };
    let solve_ms = ms(t1);
    let mut rows = Vec::new();
    let mut human = String::new();
    for (p, q) in requested {
        let reason = report.reason(p, q).ok_or_else(|| {
            CliError::Usage(format!(
                "pair {}:{} has zero termination probability",
                m.name(p),
                m.name(q)
            ))
        })?;
        let verdict = if reason.is_finite() { "FINITE" } else { "INFINITE" };
        rows.push(json!({
            "p": m.name(p), "q": m.name(q), "verdict": verdict, "reason": reason.token(),
        }));
        human.push_str(&format!(
            "({}, {}): {} / {}\n",
            m.name(p),
            m.name(q),
            verdict,
            reason.token()
        ));
    }
    let doc = json!({
        "command": "classify",
        "model": info.to_json(),
        "pairs": rows,
    });
    emit(a.common.json, doc, human, &[("parse", parse_ms), ("solve", solve_ms)]);
    Ok(())
}

fn cmd_exptime(a: ExptimeArgs) -> Result<(), CliError> {
    check_tolerance(a.abs_err, "--abs-err")?;
    let t0 = Instant::now();
    let (m, info) = load_model(&a.common.model)?;
    let parse_ms = ms(t0);
    let t1 = Instant::now();
    let mode = match a.mode {
        Mode::Adaptive => PrecisionMode::Adaptive,
        Mode::Rigorous => PrecisionMode::Rigorous,
    };
    let report =
        exptime::expected_times(&m, &rat_of_f64(a.abs_err), mode).map_err(exptime_err)?;
    let requested = match a.pairs.as_deref() {
        Some(s) => parse_pairs(&m, s)?,
        None => report.finiteness.pairs.clone(),
    };
    let solve_ms = ms(t1);
    let mut rows = Vec::new();
    let mut human = String::new();
    for (p, q) in requested {
        let reason = report.finiteness.reason(p, q).ok_or_else(|| {
            CliError::Usage(format!(
                "pair {}:{} has zero termination probability",
                m.name(p),
                m.name(q)
            ))
        })?;
        let value = report.value(p, q);
        let value_json = match value {
            Some(v) => json!(v),
            None => json!("inf"),
        };
        rows.push(json!({
            "p": m.name(p), "q": m.name(q), "value": value_json,
            "abs_err": report.abs_err, "reason": reason.token(),
        }));
        let rendered = match value {
            Some(v) => format!("{v:.3}"),
            None => "inf".to_string(),
        };
        let verdict = if reason.is_finite() { "FINITE" } else { "INFINITE" };
        human.push_str(&format!(
            "E[{} -> {}] = {}  ({}: {})\n",
            m.name(p),
            m.name(q),
            rendered,
            verdict,
            reason.token()
        ));
    }
    let mode_token = match report.mode {
        PrecisionMode::Adaptive => "adaptive",
        PrecisionMode::Rigorous => "rigorous",
    };
    human.push_str(&format!(
        "budget: b ~ 2^{:.1}, delta ~ 2^{:.1} ({mode_token})\n",
        report.budget.b.log2, report.budget.delta.log2
    ));
    let doc = json!({
        "command": "exptime",
        "model": info.to_json(),
        "pairs": rows,
        "budget": {
            "b_log2": report.budget.b.log2,
            "delta_log2": report.budget.delta.log2,
            "mode": mode_token,
        },
    });
    emit(a.common.json, doc, human, &[("parse", parse_ms), ("solve", solve_ms)]);
    Ok(())
}

fn cmd_diverge(a: DivergeArgs) -> Result<(), CliError> {
    check_tolerance(a.rel_err, "--rel-err")?;
    let t0 = Instant::now();
    let (m, info) = load_model(&a.common.model)?;
    let parse_ms = ms(t0);
    let (p, counter) = parse_from(&m, &a.from)?;
    if counter.is_some_and(|c| c != 1) {
        return Err(CliError::Usage("divergence is analyzed from counter 1".to_string()));
    }
    let t1 = Instant::now();
    let analysis = omega::divergence(&m, p).map_err(omega_err)?;
    let value = if analysis.positive {
        omega::nonterm_prob(&m, p, &rat_of_f64(a.rel_err)).map_err(omega_err)?
    } else {
        0.0
    };
    let solve_ms = ms(t1);
    let witness_json = match &analysis.witness {
        None => Value::Null,
        Some(DivergenceWitness::SureDiverger { q, path_len }) => json!({
            "kind": "SURE_DIVERGER", "to": m.name(*q), "path_len": path_len,
        }),
        Some(DivergenceWitness::PositiveTrendBscc { q, path_len, trend, span }) => json!({
            "kind": "POSITIVE_TREND_BSCC", "to": m.name(*q), "path_len": path_len,
            "trend": rat_to_f64(trend), "span": rat_to_f64(span),
        }),
    };
    let lb_log2 = analysis.lower_bound.as_ref().map(log2_rat);
    let doc = json!({
        "command": "diverge",
        "model": info.to_json(),
        "state": m.name(p),
        "positive": analysis.positive,
        "witness": witness_json,
        "lower_bound_log2": lb_log2,
        "value": value,
        "rel_err": a.rel_err,
    });
    let mut human = format!("[{} up] = {:.6}\n", m.name(p), value);
    match &analysis.witness {
        None => human.push_str("not positive: every run drains the counter almost surely\n"),
        Some(DivergenceWitness::SureDiverger { q, path_len }) => human.push_str(&format!(
            "witness: sure diverger {} reached in {} steps; lower bound 2^{:.1}\n",
            m.name(*q),
            path_len,
            lb_log2.unwrap_or(f64::NEG_INFINITY)
        )),
        Some(DivergenceWitness::PositiveTrendBscc { q, path_len, trend, .. }) => {
            human.push_str(&format!(
                "witness: positive-trend component (trend {:.4}) via {} in {} steps; lower bound 2^{:.1}\n",
                rat_to_f64(trend),
                m.name(*q),
                path_len,
                lb_log2.unwrap_or(f64::NEG_INFINITY)
            ));
        }
    }
    emit(a.common.json, doc, human, &[("parse", parse_ms), ("solve", solve_ms)]);
    Ok(())
}

fn cmd_mc(a: McArgs) -> Result<(), CliError> {
    check_tolerance(a.rel_err, "--rel-err")?;
    let t0 = Instant::now();
    let (m, info) = load_model(&a.common.model)?;
    let d = load_dra(&a.dra)?;
    let parse_ms = ms(t0);
    let (state, counter) = match a.from.as_deref() {
        Some(s) => parse_from(&m, s)?,
        None => (0, None),
    };
    let start = Config { state, counter: counter.unwrap_or(0) };
    let mode = match a.mode {
        Mode::Adaptive => CheckMode::Adaptive,
        Mode::Rigorous => CheckMode::Rigorous,
    };
    let t1 = Instant::now();
    let val = m.valuation();
    let r = model_check_checked(&m, &val, &d, start, a.rel_err, mode)?;
    let solve_ms = ms(t1);
    let doc = json!({
        "command": "mc",
        "model": info.to_json(),
        "probability": r.probability,
        "rel_err": r.rel_err,
        "product_states": r.product_states,
    });
    let human = if r.qualitative {
        format!(
            "P(accept from {}({})) = {} exactly (qualitative)\n",
            m.name(state),
            start.counter,
            r.probability
        )
    } else {
        format!(
            "P(accept from {}({})) = {:.6} (rel err {:.1e}, {} product states)\n",
            m.name(state),
            start.counter,
            r.probability,
            r.rel_err,
            r.product_states
        )
    };
    emit(a.common.json, doc, human, &[("parse", parse_ms), ("solve", solve_ms)]);
    Ok(())
}

fn model_check_checked(
    m: &Poc,
    val: &crate::model::Valuation,
    d: &Dra,
    start: Config,
    rel_err: f64,
    mode: CheckMode,
) -> Result<omega::CheckResult, CliError> {
    omega::model_check_from(m, val, d, start, &rat_of_f64(rel_err), mode).map_err(omega_err)
}

fn cmd_simulate(a: SimArgs) -> Result<(), CliError> {
    if a.samples < 1 {
        return Err(CliError::Usage("--samples must be at least 1".to_string()));
    }
    if a.horizon < 1 {
        return Err(CliError::Usage("--horizon must be at least 1".to_string()));
    }
    let t0 = Instant::now();
    let (m, info) = load_model(&a.common.model)?;
    let parse_ms = ms(t0);
    let (state, counter) = match a.from.as_deref() {
        Some(s) => parse_from(&m, s)?,
        None => (0, None),
    };
    if let Some(dra_path) = &a.dra {
        if a.window < 1 || a.window >= a.horizon {
            return Err(CliError::Usage(
                "--window must satisfy 1 <= window < horizon".to_string(),
            ));
        }
        let d = load_dra(dra_path)?;
        let val = m.valuation();
        let t1 = Instant::now();
        let prod = omega::product(&m, &val, &d).map_err(omega_err)?;
        let start = Config { state: prod.initial(state), counter: counter.unwrap_or(1) };
        let est =
            sim::estimate_acceptance(&prod.rp, start, a.samples, a.horizon, a.window, a.seed);
        let solve_ms = ms(t1);
        let e = est.estimate;
        let doc = json!({
            "command": "simulate",
            "model": info.to_json(),
            "mean": e.mean, "stderr": e.stderr, "n": e.n,
            "horizon": e.horizon, "seed": e.seed,
            "heuristic": est.heuristic,
        });
        let human = format!(
            "acceptance ~ {:.4} +- {:.4} (heuristic window classifier; n={}, horizon={}, window={}, seed={})\n",
            e.mean, e.stderr, e.n, e.horizon, a.window, e.seed
        );
        emit(a.common.json, doc, human, &[("parse", parse_ms), ("simulate", solve_ms)]);
        return Ok(());
    }
    let start = Config { state, counter: counter.unwrap_or(1) };
    let t1 = Instant::now();
    let profile = sim::termination_profile(&m, start, a.samples, a.horizon, a.seed);
    let est = match a.to.as_deref() {
        Some(s) => profile.termination(parse_state(&m, s)?),
        None => profile.termination_total(),
    };
    let solve_ms = ms(t1);
    let doc = json!({
        "command": "simulate",
        "model": info.to_json(),
        "mean": est.mean, "stderr": est.stderr, "n": est.n,
        "horizon": est.horizon, "seed": est.seed,
    });
    let mut human = format!(
        "termination from {}({}) ~ {:.4} +- {:.4} (n={}, horizon={}, seed={})\n",
        m.name(state),
        start.counter,
        est.mean,
        est.stderr,
        est.n,
        est.horizon,
        est.seed
    );
    for q in 0..m.n_states() {
        if profile.hits[q] > 0 {
            let t = profile.termination(q);
            let time = profile.exp_time(q).expect("hit count positive");
            human.push_str(&format!(
                "  into {}: prob ~ {:.4} +- {:.4}, mean steps ~ {:.3} +- {:.3}\n",
                m.name(q),
                t.mean,
                t.stderr,
                time.mean,
                time.stderr
            ));
        }
    }
    emit(a.common.json, doc, human, &[("parse", parse_ms), ("simulate", solve_ms)]);
    Ok(())
}

fn grand_case_token(case: GrandCase) -> &'static str {
    match case {
        GrandCase::NotInBscc => "NOT_IN_BSCC",
        GrandCase::TrendNonzero => "TREND_NONZERO",
        GrandCase::PrepostFinite => "PREPOST_FINITE",
    }
}

fn cmd_bounds(a: BoundsArgs) -> Result<(), CliError> {
    check_tolerance(a.abs_err, "--abs-err")?;
    let t0 = Instant::now();
    let (m, info) = load_model(&a.common.model)?;
    let parse_ms = ms(t0);
    let t1 = Instant::now();
    let n = m.n_states();
    let x_min = m.x_min();
    let mut list = Vec::new();
    let mut human = String::new();
    let mut push = |name: &str, inputs: Value, log2: f64, human: &mut String| {
        human.push_str(&format!("{name} {inputs} ~ 2^{log2:.2}\n"));
        list.push(json!({ "name": name, "inputs": inputs, "value_log2": log2 }));
    };
    let pump = bounds::pumping_bound(n as u64);
    push("pumping_bound", json!({ "n_states": n }), (pump as f64).log2(), &mut human);
    let span = bounds::potential_span_bound(n as u32, x_min)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    push(
        "potential_span_bound",
        json!({ "n_states": n, "x_min": rat_to_f64(x_min) }),
        span.log2,
        &mut human,
    );
    let ch = chain::underlying_chain(&m);
    let scc = chain::scc_decompose(&ch);
    let analyses =
        chain::bottom_analyses(&ch, &scc).map_err(|e| CliError::Internal(e.to_string()))?;
    for (i, an) in analyses.iter().enumerate() {
        if an.trend > Rat::zero() {
            let gap = bounds::gap_bound(&an.trend, &an.span)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            push(
                "gap_bound",
                json!({
                    "component": i,
                    "trend": rat_to_f64(&an.trend),
                    "span": rat_to_f64(&an.span),
                }),
                log2_rat(&gap),
                &mut human,
            );
        }
    }
    let in_bottom = {
        let mut flags = vec![false; n];
        for (i, comp) in scc.components.iter().enumerate() {
            if scc.is_bottom[i] {
                for &s in comp {
                    flags[s] = true;
                }
            }
        }
        flags
    };
    let mut cases = Vec::new();
    if in_bottom.iter().any(|b| !b) {
        cases.push((GrandCase::NotInBscc, None));
    }
    let nonzero: Vec<Rat> = analyses
        .iter()
        .filter(|an| an.trend != Rat::zero())
        .map(|an| {
            if an.trend < Rat::zero() {
                -an.trend.clone()
            } else {
                an.trend.clone()
            }
        })
        .collect();
    if let Some(t_min) = nonzero.iter().min() {
        cases.push((GrandCase::TrendNonzero, Some(t_min.clone())));
    }
    if analyses.iter().any(|an| an.trend == Rat::zero()) {
        cases.push((GrandCase::PrepostFinite, None));
    }
    for (case, t) in cases {
        let v = bounds::grand_bound(case, n as u32, x_min, t.as_ref())
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let mut inputs = serde_json::Map::new();
        inputs.insert("case".to_string(), json!(grand_case_token(case)));
        inputs.insert("n_states".to_string(), json!(n));
        inputs.insert("x_min".to_string(), json!(rat_to_f64(x_min)));
        if let Some(t) = &t {
            inputs.insert("t_min".to_string(), json!(rat_to_f64(t)));
        }
        push("grand_bound", Value::Object(inputs), v.log2, &mut human);
    }
    let tpos = reach::positive_pairs(&m);
    let finiteness = exptime::classify_finiteness(&m, &tpos);
    let budget = exptime::error_budget(&m, &finiteness, &rat_of_f64(a.abs_err));
    push(
        "error_budget_b",
        json!({ "abs_err": a.abs_err }),
        budget.b.log2,
        &mut human,
    );
    push(
        "error_budget_delta",
        json!({ "abs_err": a.abs_err }),
        budget.delta.log2,
        &mut human,
    );
    let solve_ms = ms(t1);
    let doc = json!({
        "command": "bounds",
        "model": info.to_json(),
        "list": list,
    });
    emit(a.common.json, doc, human, &[("parse", parse_ms), ("solve", solve_ms)]);
    Ok(())
}
