//! The `qentropy` command line: argument parsing, input loading, dispatch
//! and report emission.
//!
//! Exit status: 0 on success, 2 on argument, input or numeric errors, 3
//! when a verification found a violation.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{QitError, Result};
use crate::laws::{fuzz, LawId, QSpan, SlackReport, SLACK_TOL};
use crate::markov::{
    entropy_rate_approximants, second_law_report, stationary_default, EntropyRates, MarkovChain, SecondLawReport,
    SecondLawRow,
};
use crate::maxent::{mean_sweep, solve, verify_optimality, MaxEntProblem, OptimalityReport, Residuals, SweepRow};
use crate::measures::{
    conditional_entropy_axes, conditional_mutual_information_axes, entropy_of, q_entropy, relative_q_entropy,
    tsallis_entropy, MeasureValue,
};
use crate::output::{fmt_num, render_json, Csv};
use crate::prob::{json_error, JointTable, ProbVec, Rng};
use crate::qlog::{QParam, QRange};
use crate::smb::{smb_probe, SmbCurve, SmbRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

/// Environment variable that replaces `--seed` when set.
pub const SEED_ENV: &str = "QIT_SEED";

#[derive(Parser, Debug)]
#[command(name = "qentropy", version, about = "q-entropy measures, inequality fuzzing, Markov second law, q-MaxEnt and SMB probes")]
#[command(allow_negative_numbers = true)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalOpts {
    /// Write the report to this file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Omit the timestamp so repeated runs are byte-identical.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Worker threads for the fuzz and smb campaigns.
    #[arg(long, default_value_t = 1, global = true)]
    workers: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum EntropyKind {
    /// `−Σ p ln_q p`
    Q,
    /// `(1 − Σ p^q) / (q − 1)`
    Tsallis,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Entropy of one distribution.
    Entropy {
        /// `{"p":[...]}` inline or a path to a JSON file.
        #[arg(long)]
        dist: String,
        #[arg(long)]
        q: f64,
        #[arg(long, value_enum, default_value_t = EntropyKind::Q)]
        kind: EntropyKind,
    },
    /// Named measures of a joint table, or a relative entropy of two distributions.
    Measures {
        /// `{"table":[[...]]}` inline or a path.
        #[arg(long, conflicts_with_all = ["dist", "reference"])]
        table: Option<String>,
        #[arg(long, requires = "reference")]
        dist: Option<String>,
        /// Reference distribution of the relative entropy.
        #[arg(long = "ref", id = "reference", requires = "dist")]
        reference: Option<String>,
        #[arg(long)]
        q: f64,
    },
    /// Randomized slack campaign for one law or all of them.
    Fuzz {
        /// Law name, or `all`.
        #[arg(long, default_value = "all")]
        law: String,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        /// `a:b` for uniform sampling or a single q; defaults to the law's span.
        #[arg(long)]
        q_range: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Stationary distribution, second-law table and entropy-rate approximants.
    Markov {
        /// `{"transition":[[...]],"initial":[...]}` inline or a path.
        #[arg(long)]
        chain: String,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Largest block length for the entropy-rate approximants.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Maximum q-entropy distribution under a mean constraint.
    Maxent {
        /// Comma-separated levels, e.g. `0,1,2`.
        #[arg(long, allow_hyphen_values = true)]
        levels: String,
        #[arg(long)]
        mean: f64,
        #[arg(long)]
        q: f64,
        #[arg(long, default_value_t = crate::maxent::DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = crate::maxent::DEFAULT_MAX_ITERS)]
        max_iters: usize,
        /// Also solve at this many means across the level range.
        #[arg(long)]
        sweep: Option<usize>,
        /// Compare against this many random feasible distributions.
        #[arg(long)]
        verify: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Block-entropy equipartition probe on sampled trajectories.
    Smb {
        #[arg(long)]
        chain: String,
        #[arg(long)]
        q: f64,
        /// Largest block length.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        trajectories: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Entropy { .. } => "entropy",
            Command::Measures { .. } => "measures",
            Command::Fuzz { .. } => "fuzz",
            Command::Markov { .. } => "markov",
            Command::Maxent { .. } => "maxent",
            Command::Smb { .. } => "smb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Seconds since the Unix epoch; absent under `--deterministic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<u64>,
}

/// Every JSON document the CLI writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<R> {
    pub meta: Meta,
    pub report: R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedMeasure {
    pub name: String,
    #[serde(with = "crate::output::nonfinite")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuresReport {
    pub q: f64,
    pub measures: Vec<NamedMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzReport {
    pub laws: Vec<SlackReport>,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    #[serde(flatten)]
    pub rates: EntropyRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub q: f64,
    pub chain: MarkovChain,
    pub doubly_stochastic: bool,
    pub stationary: Vec<f64>,
    /// Absent when `q` is outside `[0, 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_law: Option<SecondLawReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rates: Vec<RateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntReport {
    pub levels: Vec<f64>,
    pub mean: f64,
    pub q: f64,
    pub p: Vec<f64>,
    pub lambda: f64,
    pub mu: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub h_q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<Verification>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub seed: u64,
    #[serde(flatten)]
    pub result: OptimalityReport,
}

/// A rendered report plus the exit status it implies.
struct Outcome {
    json: Value,
    csv: Csv,
    status: i32,
    warnings: Vec<String>,
}

impl Outcome {
    fn new<R: Serialize>(report: &R, csv: Csv) -> Result<Self> {
        let json = serde_json::to_value(report).map_err(|e| QitError::Parse(format!("cannot serialize report: {e}")))?;
        Ok(Outcome {
            json,
            csv,
            status: EXIT_OK,
            warnings: Vec::new(),
        })
    }
}

/// Parses a document written by the CLI back into its typed report.
pub fn parse_report<R: DeserializeOwned>(text: &str) -> Result<Envelope<R>> {
    serde_json::from_str(text).map_err(json_error)
}

/// Runs with the process environment, standard output and standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_seed = std::env::var(SEED_ENV).ok();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, env_seed.as_deref(), &mut stdout.lock(), &mut stderr.lock())
}

/// Runs with an explicit seed override and output streams.
pub fn run_with<I, T>(args: I, env_seed: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { out } else { err };
            let _ = sink.write_all(text.as_bytes());
            return if code == 0 { EXIT_OK } else { EXIT_ERROR };
        }
    };
    match execute(&cli, env_seed) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                let _ = writeln!(err, "warning: {w}");
            }
            let text = render(&cli, &outcome);
            let written = match &cli.global.out {
                Some(path) => fs::write(path, text.as_bytes())
                    .map_err(|e| format!("cannot write {}: {e}", path.display())),
                None => out.write_all(text.as_bytes()).map_err(|e| e.to_string()),
            };
            match written {
                Ok(()) => outcome.status,
                Err(msg) => {
                    let _ = writeln!(err, "error: {msg}");
                    EXIT_ERROR
                }
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn render(cli: &Cli, outcome: &Outcome) -> String {
    match cli.global.format {
        Format::Csv => outcome.csv.render(),
        Format::Json => {
            let meta = Meta {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: cli.command.name().to_string(),
                timestamp: (!cli.global.deterministic).then(|| {
                    std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map(|d| d.as_secs())
                        .unwrap_or(0)
                }),
            };
            let env = Envelope {
                meta,
                report: outcome.json.clone(),
            };
            render_json(&serde_json::to_value(env).expect("envelope serializes"))
        }
    }
}

fn resolve_seed(flag: u64, env_seed: Option<&str>) -> Result<u64> {
    match env_seed {
        Some(s) => s
            .trim()
            .parse()
            .map_err(|_| QitError::arg(format!("{SEED_ENV}='{s}' is not an unsigned 64-bit integer"))),
        None => Ok(flag),
    }
}

fn execute(cli: &Cli, env_seed: Option<&str>) -> Result<Outcome> {
    let workers = cli.global.workers.max(1);
    match &cli.command {
        Command::Entropy { dist, q, kind } => cmd_entropy(dist, *q, *kind),
        Command::Measures {
            table,
            dist,
            reference,
            q,
        } => cmd_measures(table.as_deref(), dist.as_deref(), reference.as_deref(), *q),
        Command::Fuzz {
            law,
            trials,
            q_range,
            seed,
        } => cmd_fuzz(law, *trials, q_range.as_deref(), resolve_seed(*seed, env_seed)?, workers),
        Command::Markov {
            chain,
            q,
            steps,
            horizon,
        } => cmd_markov(chain, *q, *steps, *horizon),
        Command::Maxent {
            levels,
            mean,
            q,
            tol,
            max_iters,
            sweep,
            verify,
            seed,
        } => cmd_maxent(
            levels,
            *mean,
            *q,
            *tol,
            *max_iters,
            *sweep,
            *verify,
            resolve_seed(*seed, env_seed)?,
        ),
        Command::Smb {
            chain,
            q,
            n,
            k,
            trajectories,
            seed,
        } => cmd_smb(chain, *q, *n, *k, *trajectories, resolve_seed(*seed, env_seed)?, workers),
    }
}

/// Inline JSON when the argument starts with `{`, otherwise a file path.
fn load_json(arg: &str, flag: &str) -> Result<Value> {
    let trimmed = arg.trim_start();
    let (text, origin) = if trimmed.starts_with('{') {
        (arg.to_string(), format!("--{flag}"))
    } else {
        let text = fs::read_to_string(arg).map_err(|e| QitError::arg(format!("--{flag}: cannot read '{arg}': {e}")))?;
        (text, format!("--{flag} {arg}"))
    };
    serde_json::from_str(&text).map_err(|e| match json_error(e) {
        QitError::Parse(msg) => QitError::Parse(format!("{origin}: {msg}")),
        other => other,
    })
}

/// A distribution document, or a CLI report that carries one under `p`.
fn load_dist(arg: &str, flag: &str) -> Result<ProbVec> {
    let v = load_json(arg, flag)?;
    let v = v.get("report").unwrap_or(&v);
    let doc = if v.get("levels").is_some() {
        serde_json::json!({ "p": v.get("p").cloned().unwrap_or(Value::Null) })
    } else {
        v.clone()
    };
    serde_json::from_value(doc).map_err(|e| QitError::Parse(format!("--{flag}: {e}")))
}

fn load_table(arg: &str) -> Result<JointTable> {
    let v = load_json(arg, "table")?;
    JointTable::from_json_value(&v)
}

/// A chain document, or a `markov` report that embeds one under `chain`.
fn load_chain(arg: &str) -> Result<MarkovChain> {
    let v = load_json(arg, "chain")?;
    let doc = v.get("report").and_then(|r| r.get("chain")).unwrap_or(&v);
    serde_json::from_value(doc.clone()).map_err(|e| QitError::Parse(format!("--chain: {e}")))
}

fn cmd_entropy(dist: &str, q: f64, kind: EntropyKind) -> Result<Outcome> {
    let q = QParam::new(q)?;
    let p = load_dist(dist, "dist")?;
    let m: MeasureValue = match kind {
        EntropyKind::Q => q_entropy(&p, q),
        EntropyKind::Tsallis => tsallis_entropy(&p, q),
    };
    let mut csv = Csv::new("kind,q,value");
    let kind_name = serde_json::to_value(m.kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    csv.push(vec![kind_name, fmt_num(q.value()), fmt_num(m.value)]);
    Outcome::new(&m, csv)
}

fn axis_name(axes: &[usize]) -> String {
    axes.iter().map(|a| format!("X{a}")).collect::<Vec<_>>().join(",")
}

fn table_measures(t: &JointTable, q: QParam) -> Result<Vec<NamedMeasure>> {
    let rank = t.rank();
    let named = |name: String, value: f64| NamedMeasure { name, value };
    let mut out = Vec::new();
    let all: Vec<usize> = (0..rank).collect();
    out.push(named(format!("H({})", axis_name(&all)), entropy_of(t.data(), q)));
    if rank == 1 {
        return Ok(out);
    }
    for a in 0..rank {
        let h = conditional_entropy_axes(t, &[a], &[], q)?;
        out.push(named(format!("H(X{a})"), h));
    }
    for a in 0..rank {
        let rest: Vec<usize> = (0..rank).filter(|&b| b != a).collect();
        let h = conditional_entropy_axes(t, &rest, &[a], q)?;
        out.push(named(format!("H({}|X{a})", axis_name(&rest)), h));
    }
    out.push(named(
        "I(X0;X1)".into(),
        conditional_mutual_information_axes(t, &[0], &[1], &[], q)?,
    ));
    if rank == 3 {
        out.push(named(
            "I(X0;X1|X2)".into(),
            conditional_mutual_information_axes(t, &[0], &[1], &[2], q)?,
        ));
        out.push(named(
            "I(X0;X1,X2)".into(),
            conditional_mutual_information_axes(t, &[0], &[1, 2], &[], q)?,
        ));
    }
    Ok(out)
}

fn cmd_measures(table: Option<&str>, dist: Option<&str>, reference: Option<&str>, q: f64) -> Result<Outcome> {
    let qp = QParam::new(q)?;
    let measures = match (table, dist, reference) {
        (Some(t), _, _) => table_measures(&load_table(t)?, qp)?,
        (None, Some(d), Some(r)) => {
            let p = load_dist(d, "dist")?;
            let r = load_dist(r, "ref")?;
            vec![NamedMeasure {
                name: "D(p||r)".into(),
                value: relative_q_entropy(&p, &r, qp)?.value,
            }]
        }
        _ => return Err(QitError::arg("measures needs --table, or --dist together with --ref")),
    };
    let mut csv = Csv::new("name,value");
    for m in &measures {
        csv.push(vec![m.name.clone(), fmt_num(m.value)]);
    }
    Outcome::new(&MeasuresReport { q, measures }, csv)
}

fn cmd_fuzz(law: &str, trials: usize, q_range: Option<&str>, seed: u64, workers: usize) -> Result<Outcome> {
    let laws: Vec<LawId> = if law == "all" {
        LawId::ALL.to_vec()
    } else {
        vec![law.parse()?]
    };
    let span: Option<QSpan> = q_range.map(str::parse).transpose()?;
    let mut reports = Vec::with_capacity(laws.len());
    for id in laws {
        let s = span.unwrap_or_else(|| id.default_span());
        reports.push(fuzz(id, trials, s, seed, workers)?);
    }
    let violations: usize = reports.iter().map(|r| r.violations).sum();
    let mut csv = Csv::new(SlackReport::CSV_HEADER);
    for r in &reports {
        csv.push(vec![
            r.law.to_string(),
            r.trials.to_string(),
            fmt_num(r.min_slack),
            fmt_num(r.mean_slack),
            r.violations.to_string(),
            r.seed.to_string(),
        ]);
    }
    let mut outcome = Outcome::new(&FuzzReport { laws: reports, violations }, csv)?;
    if violations > 0 {
        outcome.status = EXIT_VIOLATION;
    }
    Ok(outcome)
}

fn second_law_csv(rows: &[SecondLawRow]) -> Csv {
    let mut csv = Csv::new(SecondLawRow::CSV_HEADER);
    for r in rows {
        csv.push(vec![
            r.step.to_string(),
            fmt_num(r.h_q),
            fmt_num(r.delta_h),
            fmt_num(r.t_q),
            fmt_num(r.lhs),
            fmt_num(r.slack),
        ]);
    }
    csv
}

fn cmd_markov(chain: &str, q: f64, steps: usize, horizon: Option<usize>) -> Result<Outcome> {
    let qp = QParam::new(q)?;
    let c = load_chain(chain)?;
    let stationary = stationary_default(&c)?.into_vec();
    let mut warnings = Vec::new();
    let second_law = if QRange::UNIT.contains(q) {
        Some(second_law_report(&c, qp, steps)?)
    } else {
        warnings.push(format!("q = {q} is outside [0, 1); the second-law table is omitted"));
        None
    };
    let mut rates = Vec::new();
    if let Some(h) = horizon {
        for n in 1..=h {
            rates.push(RateRow {
                n,
                rates: entropy_rate_approximants(&c, n, qp)?,
            });
        }
    }
    let mut status = EXIT_OK;
    if let Some(sl) = &second_law {
        if !sl.applicable {
            warnings.push("the chain is not doubly stochastic; the slack is reported but not checked".into());
        } else if sl.min_slack() < -SLACK_TOL {
            status = EXIT_VIOLATION;
        }
    }
    let csv = second_law_csv(second_law.as_ref().map(|s| s.rows.as_slice()).unwrap_or(&[]));
    let report = MarkovReport {
        q,
        doubly_stochastic: c.is_doubly_stochastic(),
        chain: c,
        stationary,
        second_law,
        rates,
    };
    let mut outcome = Outcome::new(&report, csv)?;
    outcome.status = status;
    outcome.warnings = warnings;
    Ok(outcome)
}

fn parse_levels(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| QitError::arg(format!("--levels: '{}' is not a number", t.trim())))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_maxent(
    levels: &str,
    mean: f64,
    q: f64,
    tol: f64,
    max_iters: usize,
    sweep: Option<usize>,
    verify: Option<usize>,
    seed: u64,
) -> Result<Outcome> {
    let qp = QParam::new(q)?;
    let levels = parse_levels(levels)?;
    let problem = MaxEntProblem::new(levels.clone(), mean, qp)?;
    let sol = solve(&problem, tol, max_iters)?;
    let verification = match verify {
        Some(trials) => {
            let mut rng = Rng::new(seed, 0);
            Some(Verification {
                seed,
                result: verify_optimality(&sol, &problem, trials, &mut rng)?,
            })
        }
        None => None,
    };
    let sweep_rows = match sweep {
        Some(points) => mean_sweep(&levels, qp, points, tol, max_iters)?,
        None => Vec::new(),
    };
    let csv = if sweep.is_some() {
        let mut csv = Csv::new(SweepRow::CSV_HEADER);
        for r in &sweep_rows {
            csv.push(vec![
                fmt_num(r.mean),
                fmt_num(r.lambda),
                fmt_num(r.mu),
                fmt_num(r.h_q),
                r.iterations.to_string(),
            ]);
        }
        csv
    } else {
        let mut csv = Csv::new("level,p");
        for (e, p) in levels.iter().zip(sol.p.as_slice()) {
            csv.push(vec![fmt_num(*e), fmt_num(*p)]);
        }
        csv
    };
    let status = match &verification {
        Some(v) if v.result.min_gap < -SLACK_TOL => EXIT_VIOLATION,
        _ => EXIT_OK,
    };
    let report = MaxEntReport {
        h_q: entropy_of(sol.p.as_slice(), qp),
        levels,
        mean,
        q,
        p: sol.p.into_vec(),
        lambda: sol.lambda,
        mu: sol.mu,
        residuals: sol.residuals,
        iterations: sol.iterations,
        verification,
        sweep: sweep_rows,
    };
    let mut outcome = Outcome::new(&report, csv)?;
    outcome.status = status;
    Ok(outcome)
}

fn smb_csv(curve: &SmbCurve) -> Csv {
    let mut csv = Csv::new(SmbRow::CSV_HEADER);
    for r in &curve.rows {
        csv.push(vec![
            r.n.to_string(),
            fmt_num(r.block_mean),
            fmt_num(r.block_sd),
            fmt_num(r.pk_mean),
            fmt_num(r.t3_over_n_mean),
            fmt_num(r.cond_c1_rate),
            fmt_num(r.cond_c2_rate),
            fmt_num(r.ratio1_mean),
            fmt_num(r.ratio2_mean),
            fmt_num(curve.h_q_k),
            fmt_num(curve.h_q_inf),
        ]);
    }
    csv
}

fn cmd_smb(chain: &str, q: f64, n: usize, k: usize, trajectories: usize, seed: u64, workers: usize) -> Result<Outcome> {
    let qp = QParam::new(q)?;
    let c = load_chain(chain)?;
    let curve = smb_probe(&c, qp, n, k, trajectories, seed, workers)?;
    let mut outcome = Outcome::new(&curve, smb_csv(&curve))?;
    if let Some(w) = &curve.range_warning {
        outcome.warnings.push(w.clone());
    }
    if curve.bound_violations > 0 {
        outcome.status = EXIT_VIOLATION;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        call_env(args, None)
    }

    fn call_env(args: &[&str], env_seed: Option<&str>) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut argv = vec!["qentropy"];
        argv.extend_from_slice(args);
        let code = run_with(argv, env_seed, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    const STICKY: &str = r#"{"transition":[[0.9,0.1],[0.1,0.9]],"initial":[1,0]}"#;

    #[test]
    fn entropy_examples() {
        let (code, out, _) = call(&["entropy", "--dist", r#"{"p":[0.5,0.5]}"#, "--q", "0.5", "--deterministic"]);
        assert_eq!(code, 0);
        assert!(out.contains("\"value\": 0.5857864376\n"), "{out}");
        let (code, out, _) = call(&["entropy", "--dist", r#"{"p":[1.0]}"#, "--q", "0.7", "--format", "csv"]);
        assert_eq!(code, 0);
        assert_eq!(out, "kind,q,value\nq_entropy,0.7,0\n");
    }

    #[test]
    fn malformed_json_reports_position() {
        let (code, out, err) = call(&["entropy", "--dist", "{\"p\":[0.5,\n 0.5", "--q", "0.5"]);
        assert_eq!(code, EXIT_ERROR);
        assert!(out.is_empty());
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("column"), "{err}");
    }

    #[test]
    fn argument_errors_exit_two() {
        assert_eq!(call(&[]).0, EXIT_ERROR);
        assert_eq!(call(&["frobnicate"]).0, EXIT_ERROR);
        assert_eq!(call(&["entropy", "--q", "0.5"]).0, EXIT_ERROR);
        assert_eq!(call(&["entropy", "--dist", r#"{"p":[0.5,0.6]}"#, "--q", "0.5"]).0, EXIT_ERROR);
        assert_eq!(call(&["entropy", "--dist", "/nonexistent/x.json", "--q", "0.5"]).0, EXIT_ERROR);
        assert_eq!(call(&["fuzz", "--law", "no-such-law", "--trials", "3"]).0, EXIT_ERROR);
        assert_eq!(call(&["fuzz", "--law", "dpi", "--q-range", "0:2", "--trials", "3"]).0, EXIT_ERROR);
        assert_eq!(call(&["maxent", "--levels", "0,1,2", "--mean", "5", "--q", "0.5"]).0, EXIT_ERROR);
        assert_eq!(call(&["fuzz", "--law", "dq-nonneg", "--trials", "3"]).0, EXIT_OK);
        let (code, _, err) = call_env(&["fuzz", "--law", "dq-nonneg", "--trials", "3"], Some("abc"));
        assert_eq!(code, EXIT_ERROR);
        assert!(err.contains(SEED_ENV));
    }

    #[test]
    fn help_and_version_exit_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("fuzz"));
        assert_eq!(call(&["--version"]).0, 0);
    }

    #[test]
    fn violations_exit_three() {
        let (code, out, _) = call(&["fuzz", "--law", "joint-chain", "--trials", "300", "--q-range", "0.2:0.6", "--seed", "1"]);
        assert_eq!(code, EXIT_VIOLATION, "{out}");
        let env: Envelope<FuzzReport> = parse_report(&out).unwrap();
        assert!(env.report.violations > 0);
    }

    #[test]
    fn env_seed_overrides_flag() {
        let a = call_env(&["fuzz", "--law", "dq-nonneg", "--trials", "20", "--seed", "5", "--deterministic"], Some("9")).1;
        let b = call(&["fuzz", "--law", "dq-nonneg", "--trials", "20", "--seed", "9", "--deterministic"]).1;
        let c = call(&["fuzz", "--law", "dq-nonneg", "--trials", "20", "--seed", "5", "--deterministic"]).1;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    fn assert_round_trip<R: Serialize + DeserializeOwned>(out: &str) {
        let env: Envelope<R> = parse_report(out).unwrap();
        let again = render_json(&serde_json::to_value(&env).unwrap());
        assert_eq!(again, out);
    }

    #[test]
    fn reports_round_trip() {
        let (_, out, _) = call(&["entropy", "--dist", r#"{"p":[0.2,0.3,0.5]}"#, "--q", "1.3"]);
        assert_round_trip::<MeasureValue>(&out);
        let (_, out, _) = call(&["measures", "--table", r#"{"table":[[[0.1,0.1],[0.05,0.15]],[[0.2,0.1],[0.1,0.2]]]}"#, "--q", "0.7"]);
        assert_round_trip::<MeasuresReport>(&out);
        let (_, out, _) = call(&["measures", "--dist", r#"{"p":[1,0]}"#, "--ref", r#"{"p":[0,1]}"#, "--q", "0.5"]);
        assert!(out.contains("\"inf\""), "{out}");
        assert_round_trip::<MeasuresReport>(&out);
        let (_, out, _) = call(&["fuzz", "--trials", "30", "--seed", "3", "--deterministic"]);
        assert_round_trip::<FuzzReport>(&out);
        let (_, out, _) = call(&["markov", "--chain", STICKY, "--q", "0.8", "--steps", "5", "--horizon", "3"]);
        assert_round_trip::<MarkovReport>(&out);
        let (_, out, _) = call(&["maxent", "--levels", "0,1,2", "--mean", "0.5", "--q", "0.5", "--verify", "50", "--sweep", "3"]);
        assert_round_trip::<MaxEntReport>(&out);
        let (_, out, _) = call(&["smb", "--chain", STICKY, "--q", "0.75", "--n", "20", "--trajectories", "5"]);
        assert_round_trip::<SmbCurve>(&out);
    }

    #[test]
    fn outputs_feed_back_as_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maxent.json");
        let path_s = path.to_str().unwrap();
        let (code, _, _) = call(&["maxent", "--levels", "0,1,2", "--mean", "0.5", "--q", "0.5", "--out", path_s]);
        assert_eq!(code, 0);
        let (code, out, err) = call(&["entropy", "--dist", path_s, "--q", "0.5", "--format", "csv"]);
        assert_eq!(code, 0, "{err}");
        assert!(out.starts_with("kind,q,value\n"));

        let chain_path = dir.path().join("markov.json");
        let chain_s = chain_path.to_str().unwrap();
        call(&["markov", "--chain", STICKY, "--q", "0.5", "--steps", "2", "--out", chain_s]);
        let (code, _, err) = call(&["markov", "--chain", chain_s, "--q", "0.5", "--steps", "2"]);
        assert_eq!(code, 0, "{err}");
    }

    #[test]
    fn maxent_matches_reference() {
        let (code, out, _) = call(&["maxent", "--levels", "0,1,2", "--mean", "0.5", "--q", "0.5"]);
        assert_eq!(code, 0);
        let env: Envelope<MaxEntReport> = parse_report(&out).unwrap();
        let expect = [0.6007858820798254, 0.2984282358403491, 0.1007858820798254];
        for (a, b) in env.report.p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((env.report.lambda - 0.6746886361782797).abs() < 1e-9);
        assert!((env.report.mu - 0.6864537975386884).abs() < 1e-9);
        let (_, csv, _) = call(&["maxent", "--levels", "-1,0,1", "--mean", "0", "--q", "0.5", "--sweep", "4", "--format", "csv"]);
        assert_eq!(csv.lines().next(), Some(SweepRow::CSV_HEADER));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn markov_and_smb_csv_headers() {
        let (code, csv, _) = call(&["markov", "--chain", STICKY, "--q", "0.8", "--steps", "3", "--format", "csv"]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "step,H_q,delta_H,T_q,lhs,slack");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,0,0.2783536971,-0.06853275642,0.319744434,0.3882771904"), "{}", lines[1]);
        let (code, csv, err) = call(&["smb", "--chain", STICKY, "--q", "0.3", "--n", "8", "--trajectories", "4", "--format", "csv"]);
        assert_eq!(code, 0);
        assert!(err.contains("warning"));
        assert_eq!(csv.lines().next(), Some(SmbRow::CSV_HEADER));
    }

    #[test]
    fn out_file_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        for p in [&a, &b] {
            let code = call(&[
                "smb", "--chain", STICKY, "--q", "0.75", "--n", "30", "--trajectories", "8", "--seed", "4",
                "--deterministic", "--workers", "3", "--out", p.to_str().unwrap(),
            ])
            .0;
            assert_eq!(code, 0);
        }
        let ta = fs::read(&a).unwrap();
        assert_eq!(ta, fs::read(&b).unwrap());
        assert!(!String::from_utf8(ta).unwrap().contains("timestamp"));
        let (_, out, _) = call(&["entropy", "--dist", r#"{"p":[1.0]}"#, "--q", "0.7"]);
        assert!(out.contains("timestamp"));
    }
}
