//! `opkdv` command line: `simulate`, `check` and `plot`.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage error, 3 numeric failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{Algebra, AlgebraDescriptor};
use crate::checks::{self, CheckError, CheckOutcome, RunParams};
use crate::dynamics::{stability_limit, DynamicsError, Integrator, IntegratorConfig, ModifiedCoupling, Scheme, SystemKind, SystemState};
use crate::fields::{build_initial_condition, IcProfile, PeriodicGrid};
use crate::invariants::{default_quantities, format_number, Quantity, ReportBuilder};
use crate::snapshot;
use crate::symbolic::MonteCarlo;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Numeric(_) => EXIT_NUMERIC,
            Self::Io(_) => EXIT_USAGE,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl From<CheckError> for CliError {
    fn from(e: CheckError) -> Self {
        match e {
            CheckError::Dynamics(DynamicsError::NonFinite { .. }) => Self::Numeric(e.to_string()),
            other => Self::Usage(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "opkdv", version, about = "Super KdV systems over graded algebras: simulate, verify, plot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve a system and write snapshots, conserved quantities and a manifest.
    Simulate(SimulateArgs),
    /// Run a verification suite; exit 0 iff it passes.
    Check(CheckArgs),
    /// Draw an SVG line plot from a CSV report or a snapshot.
    Plot(PlotArgs),
}

/// Flags shared by `simulate` and `check`; all optional so a config file
/// or per-check defaults can fill them.
#[derive(Debug, Clone, Default, Args)]
struct RunFlags {
    #[arg(long)]
    system: Option<String>,
    #[arg(long)]
    algebra: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long = "gardner-eps", allow_negative_numbers = true)]
    gardner_eps: Option<f64>,
    #[arg(long = "L")]
    length: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    scheme: Option<String>,
    /// zero | soliton:kappa=K,x0=X | gaussian:amplitude=A,width=W,center=C,channel=odd:K | random:max_mode=M,amplitude=A[,seed=S]
    #[arg(long)]
    ic: Option<String>,
    /// Overrides the seed of a random initial condition.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunFlags,
    /// Comma-separated tracked quantities (H0, H2, H4, H6, H, M).
    #[arg(long, value_delimiter = ',')]
    track: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file mirroring the flags; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cubic coupling of the modified system (miura_consistent, published).
    #[arg(long)]
    coupling: Option<String>,
    /// Write a CSV row every this many steps.
    #[arg(long = "record-every")]
    record_every: Option<usize>,
    /// Write a snapshot every this many steps (0: initial and final only).
    #[arg(long = "snapshot-every")]
    snapshot_every: Option<usize>,
    /// Skip the time-step stability guard.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Miura,
    Gardner,
    Susy,
    Algebra,
    Eq15,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(value_enum)]
    suite: Suite,
    #[command(flatten)]
    run: RunFlags,
    /// Highest Gardner order in the eq15 table.
    #[arg(long = "max-order", default_value_t = 6)]
    max_order: usize,
    #[arg(long, default_value_t = 32)]
    trials: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Print the JSON verdict instead of the summary.
    #[arg(long)]
    json: bool,
    /// Directory for verdict.json and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// conserved.csv from `simulate`, or a snapshot JSON.
    #[arg(long)]
    input: PathBuf,
    /// CSV columns to draw: exact names or quantity prefixes such as H2.
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    /// Snapshot field to draw (defaults to the even field).
    #[arg(long)]
    field: Option<String>,
    /// Plot (Q(t) − Q(0)) / max(|Q(0)|, 1e-12) instead of Q(t).
    #[arg(long)]
    relative: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Fully resolved simulation settings; also the manifest and config format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub system: String,
    pub algebra: String,
    pub lambda: f64,
    pub gardner_eps: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub grid: usize,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub scheme: String,
    pub ic: String,
    pub track: Option<Vec<String>>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub coupling: String,
    pub record_every: usize,
    pub snapshot_every: usize,
    pub force: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            system: "extended".into(),
            algebra: "scalar".into(),
            lambda: 1.0,
            gardner_eps: 0.0,
            length: 40.0,
            grid: 512,
            dt: None,
            t_end: 1.0,
            scheme: "ifrk4".into(),
            ic: "soliton:kappa=1,x0=20".into(),
            track: None,
            out: None,
            seed: None,
            coupling: ModifiedCoupling::default().to_string(),
            record_every: 10,
            snapshot_every: 0,
            force: false,
        }
    }
}

impl SimConfig {
    fn overlay(&mut self, a: &SimulateArgs) {
        let r = &a.run;
        macro_rules! take {
            ($dst:ident, $src:expr) => {
                if let Some(v) = $src.clone() {
                    self.$dst = v;
                }
            };
        }
        take!(system, r.system);
        take!(algebra, r.algebra);
        take!(lambda, r.lambda);
        take!(gardner_eps, r.gardner_eps);
        take!(length, r.length);
        take!(grid, r.grid);
        take!(t_end, r.t_end);
        take!(scheme, r.scheme);
        take!(ic, r.ic);
        take!(coupling, a.coupling);
        take!(record_every, a.record_every);
        take!(snapshot_every, a.snapshot_every);
        if r.dt.is_some() {
            self.dt = r.dt;
        }
        if r.seed.is_some() {
            self.seed = r.seed;
        }
        if a.track.is_some() {
            self.track = a.track.clone();
        }
        if a.out.is_some() {
            self.out = a.out.clone();
        }
        self.force |= a.force;
    }
}

/// Manifest: every resolved input plus the code version.
#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    program: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    outputs: Vec<String>,
}

fn write_manifest<C: Serialize>(dir: &Path, command: &str, config: &C, outputs: Vec<String>) -> Result<(), CliError> {
    let m = Manifest { program: "opkdv", version: env!("CARGO_PKG_VERSION"), command, config, outputs };
    let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn resolve_ic(text: &str, seed: Option<u64>) -> Result<IcProfile, CliError> {
    let mut ic: IcProfile = text.parse().map_err(usage)?;
    if let (IcProfile::RandomBandlimited { seed: s, .. }, Some(new)) = (&mut ic, seed) {
        *s = new;
    }
    Ok(ic)
}

fn parse_algebra(s: &str) -> Result<AlgebraDescriptor, CliError> {
    s.parse().map_err(usage)
}

fn dynamics_usage(e: DynamicsError) -> CliError {
    match e {
        DynamicsError::NonFinite { .. } => CliError::Numeric(e.to_string()),
        other => usage(other),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a, out, err),
        Command::Check(a) => check(&a, out),
        Command::Plot(a) => plot(&a).map(|_| EXIT_OK),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<SimConfig>(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?
        }
        None => SimConfig::default(),
    };
    cfg.overlay(a);

    let kind: SystemKind = cfg.system.parse().map_err(usage)?;
    let desc = parse_algebra(&cfg.algebra)?;
    let scheme: Scheme = cfg.scheme.parse().map_err(usage)?;
    let coupling: ModifiedCoupling = cfg.coupling.parse().map_err(usage)?;
    if kind != SystemKind::Gardner && cfg.gardner_eps != 0.0 {
        return Err(usage("--gardner-eps is only valid with --system gardner"));
    }
    let ic = resolve_ic(&cfg.ic, cfg.seed)?;
    cfg.ic = ic.to_string();
    let quantities = match &cfg.track {
        Some(names) => names.iter().map(|n| n.parse::<Quantity>().map_err(usage)).collect::<Result<Vec<_>, _>>()?,
        None => default_quantities(kind),
    };
    cfg.track = Some(quantities.iter().map(|q| q.to_string()).collect());
    cfg.system = kind.to_string();
    cfg.algebra = desc.to_string();
    cfg.scheme = scheme.to_string();
    cfg.coupling = coupling.to_string();

    let grid = PeriodicGrid::new(cfg.length, cfg.grid).map_err(usage)?;
    let dt = cfg.dt.unwrap_or_else(|| 0.5 * stability_limit(&grid, scheme, true));
    if !(cfg.t_end.is_finite() && cfg.t_end > 0.0) {
        return Err(usage(format!("--t-end must be positive, got {}", cfg.t_end)));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(usage(format!("--dt must be positive, got {dt}")));
    }
    // shrink dt so the run lands on t_end; a manifest rerun reproduces it exactly
    let steps = ((cfg.t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let dt = cfg.t_end / steps as f64;
    cfg.dt = Some(dt);
    let record_every = cfg.record_every.max(1);
    let dir = cfg.out.clone().ok_or_else(|| usage("--out DIR is required"))?;

    let alg = Algebra::new(desc);
    let init = build_initial_condition(&ic, &grid, &alg).map_err(usage)?;
    for w in &init.warnings {
        let _ = writeln!(err, "warning: {w}");
    }
    let state = SystemState::new(kind, init.even, init.odd, cfg.lambda, cfg.gardner_eps)
        .map_err(usage)?
        .with_coupling(coupling);

    std::fs::create_dir_all(&dir)?;
    let mut outputs = Vec::new();
    let mut report = ReportBuilder::new(quantities);
    let mut failure: Option<CliError> = None;
    let mut index = 0usize;
    let snap_every = cfg.snapshot_every;
    let mut on_step = |s: &SystemState| {
        if failure.is_some() {
            return;
        }
        let last = index == steps;
        if index.is_multiple_of(record_every) || last {
            if let Err(e) = report.record(s) {
                failure = Some(usage(e));
            }
        }
        if index == 0 || last || (snap_every > 0 && index.is_multiple_of(snap_every)) {
            let name = format!("snapshot_{index:07}.json");
            match snapshot::write(&dir.join(&name), s) {
                Ok(()) => outputs.push(name),
                Err(e) => failure = Some(CliError::Io(std::io::Error::other(e))),
            }
        }
        index += 1;
    };
    let integ = Integrator::new(IntegratorConfig::new(dt, steps, scheme).record_every(steps.max(1)).force(cfg.force));
    let run = integ.run(&state, Some(&mut on_step));
    if let Some(e) = failure {
        return Err(e);
    }
    let mut code = EXIT_OK;
    if let Err(e) = run {
        match e {
            DynamicsError::NonFinite { ref last, .. } => {
                snapshot::write(&dir.join("last_finite.json"), last).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
                outputs.push("last_finite.json".into());
                let _ = writeln!(err, "error: {e}");
                code = EXIT_NUMERIC;
            }
            other => return Err(dynamics_usage(other)),
        }
    }
    if let Ok(report) = report.finish() {
        let mut f = std::fs::File::create(dir.join("conserved.csv"))?;
        report.write_csv(&mut f).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        outputs.push("conserved.csv".into());
        for (q, d) in report.quantities.iter().zip(&report.drift) {
            let _ = writeln!(out, "{q:<3} drift {}", format_number(*d));
        }
    }
    outputs.sort();
    write_manifest(&dir, "simulate", &cfg, outputs)?;
    let _ = writeln!(out, "wrote {} ({steps} steps, dt = {dt:e})", dir.display());
    Ok(code)
}

/// Resolved inputs of a check, recorded in its manifest.
#[derive(Debug, Serialize)]
struct CheckManifest {
    suite: String,
    algebra: String,
    lambda: f64,
    gardner_eps: f64,
    #[serde(rename = "L")]
    length: f64,
    grid: usize,
    dt: f64,
    t_end: f64,
    scheme: String,
    ic: String,
    max_order: usize,
    trials: usize,
    tol: f64,
    seed: Option<u64>,
}

fn check(a: &CheckArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let r = &a.run;
    if r.system.is_some() {
        return Err(usage("check suites pick their own systems; drop --system"));
    }
    let mut p = RunParams::default();
    if a.suite == Suite::Susy {
        p.t_end = 0.1;
    }
    if let Some(s) = &r.algebra {
        p.algebra = parse_algebra(s)?;
    } else if a.suite == Suite::Algebra {
        p.algebra = AlgebraDescriptor::Scalar;
    }
    p.lambda = r.lambda.unwrap_or(p.lambda);
    p.gardner_eps = r.gardner_eps.unwrap_or(p.gardner_eps);
    p.length = r.length.unwrap_or(p.length);
    p.points = r.grid.unwrap_or(p.points);
    p.dt = r.dt.unwrap_or(p.dt);
    p.t_end = r.t_end.unwrap_or(p.t_end);
    if let Some(s) = &r.scheme {
        p.scheme = s.parse().map_err(usage)?;
    }
    p.ic = match &r.ic {
        Some(text) => resolve_ic(text, r.seed)?,
        None => resolve_ic(&p.ic.to_string(), r.seed)?,
    };
    let mc = MonteCarlo { trials: a.trials, tol: a.tol, seed: r.seed.unwrap_or(MonteCarlo::default().seed), ..MonteCarlo::default() };

    let mut extra = None;
    let outcome: CheckOutcome = match a.suite {
        Suite::Algebra => checks::check_algebra(p.algebra),
        Suite::Miura => checks::check_miura(&p)?,
        Suite::Gardner => checks::check_gardner(&p)?,
        Suite::Susy => checks::check_susy(&p)?,
        Suite::Eq15 => {
            let (o, table) = checks::check_eq15(a.max_order, &mc)?;
            extra = Some(table);
            o
        }
    };
    #[derive(Serialize)]
    struct Verdict<'a> {
        #[serde(flatten)]
        outcome: &'a CheckOutcome,
        #[serde(skip_serializing_if = "Option::is_none")]
        table: Option<&'a crate::symbolic::Eq15Table>,
    }
    let verdict = Verdict { outcome: &outcome, table: extra.as_ref() };
    let json = serde_json::to_string_pretty(&verdict).map_err(|e| CliError::Io(std::io::Error::other(e)))? + "\n";
    if a.json {
        out.write_all(json.as_bytes())?;
    } else {
        out.write_all(outcome.summary().as_bytes())?;
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("verdict.json"), &json)?;
        let m = CheckManifest {
            suite: format!("{:?}", a.suite).to_lowercase(),
            algebra: p.algebra.to_string(),
            lambda: p.lambda,
            gardner_eps: p.gardner_eps,
            length: p.length,
            grid: p.points,
            dt: p.dt,
            t_end: p.t_end,
            scheme: p.scheme.to_string(),
            ic: p.ic.to_string(),
            max_order: a.max_order,
            trials: a.trials,
            tol: a.tol,
            seed: r.seed,
        };
        write_manifest(dir, "check", &m, vec!["verdict.json".into()])?;
    }
    Ok(if outcome.passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// Named polyline.
type Series = (String, Vec<(f64, f64)>);

fn plot(a: &PlotArgs) -> Result<(), CliError> {
    let is_json = a.input.extension().is_some_and(|e| e == "json");
    let (title, xlabel, series) = if is_json { snapshot_series(a)? } else { csv_series(a)? };
    std::fs::write(&a.out, svg_line_plot(&title, &xlabel, &series))?;
    Ok(())
}

fn csv_series(a: &PlotArgs) -> Result<(String, String, Vec<Series>), CliError> {
    let mut rdr = csv::Reader::from_path(&a.input).map_err(|e| usage(format!("{}: {e}", a.input.display())))?;
    let header: Vec<String> = rdr.headers().map_err(usage)?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("time") {
        return Err(usage("CSV must start with a `time` column"));
    }
    let wanted = a.columns.clone().unwrap_or_else(|| header[1..].to_vec());
    let mut cols = Vec::new();
    for w in &wanted {
        let hits: Vec<usize> = (1..header.len())
            .filter(|&i| header[i] == *w || header[i].starts_with(&format!("{w}[")))
            .collect();
        if hits.is_empty() {
            return Err(usage(format!("column `{w}` not found")));
        }
        cols.extend(hits);
    }
    let mut series: Vec<Series> = cols.iter().map(|&i| (header[i].clone(), Vec::new())).collect();
    for rec in rdr.records() {
        let rec = rec.map_err(usage)?;
        let num = |i: usize| -> Result<f64, CliError> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| usage(format!("bad number in column {i}")))
        };
        let t = num(0)?;
        for (k, &i) in cols.iter().enumerate() {
            series[k].1.push((t, num(i)?));
        }
    }
    if series.iter().all(|s| s.1.is_empty()) {
        return Err(usage("CSV has no data rows"));
    }
    if a.relative {
        for (_, pts) in &mut series {
            let q0 = pts[0].1;
            let d = q0.abs().max(crate::invariants::DRIFT_FLOOR);
            for p in pts.iter_mut() {
                p.1 = (p.1 - q0) / d;
            }
        }
    }
    let title = if a.relative { "relative drift" } else { "conserved quantities" };
    Ok((title.into(), "t".into(), series))
}

fn snapshot_series(a: &PlotArgs) -> Result<(String, String, Vec<Series>), CliError> {
    let s = snapshot::read(&a.input).map_err(usage)?;
    let (en, on) = s.kind.field_names();
    let name = a.field.clone().unwrap_or_else(|| en.to_string());
    let (channels, labels) = if name == en {
        (s.even.channels(), s.even.algebra().even_labels())
    } else if name == on {
        (s.odd.channels(), s.odd.algebra().odd_labels())
    } else {
        return Err(usage(format!("snapshot has fields `{en}` and `{on}`, not `{name}`")));
    };
    let xs = s.grid().coordinates();
    let series = channels
        .iter()
        .zip(labels)
        .map(|(c, l)| (format!("{name}[{l}]"), xs.iter().copied().zip(c.iter().copied()).collect()))
        .collect();
    Ok((format!("{name} at t = {}", s.time), "x".into(), series))
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

/// Standalone SVG with one polyline per series.
pub fn svg_line_plot(title: &str, xlabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, ml, mr, mt, mb) = (720.0, 440.0, 80.0, 170.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|s| s.1.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        if x.is_finite() && y.is_finite() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        let pad = y0.abs().max(1e-300) * 1e-3 + 1e-300;
        y0 -= pad;
        y1 += pad;
    }
    let pw = w - ml - mr;
    let ph = h - mt - mb;
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!("<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
    s.push_str(&format!("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", ml + pw / 2.0, escape(title)));
    s.push_str(&format!(
        "<rect x=\"{ml}\" y=\"{mt}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            sx(xv),
            mt + ph + 18.0,
            tick(xv)
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            ml - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        ml + pw / 2.0,
        h - 10.0,
        escape(xlabel)
    ));
    for (k, (name, data)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = data
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.join(" ")
        ));
        let ly = mt + 14.0 + 18.0 * k as f64;
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            w - mr + 10.0,
            w - mr + 30.0
        ));
        s.push_str(&format!("<text x=\"{}\" y=\"{}\">{}</text>\n", w - mr + 36.0, ly + 4.0, escape(name)));
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("opkdv").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run_args(&["simulate", "--system", "skdv", "--algebra", "symplectic:1", "--out", "/tmp/x"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["simulate", "--system", "extended", "--gardner-eps", "0.1", "--out", "/tmp/x"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["simulate", "--bogus"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["check", "algebra", "--algebra", "grassmann:99"]).0, EXIT_USAGE);
    }

    #[test]
    fn algebra_check_exit_codes() {
        assert_eq!(run_args(&["check", "algebra", "--algebra", "grassmann:1"]).0, EXIT_CHECK_FAILED);
        let (code, out, _) = run_args(&["check", "algebra", "--algebra", "symplectic:2", "--json"]);
        assert_eq!(code, EXIT_OK);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["passed"], true);
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let s = svg_line_plot("t", "x", &[("a".into(), vec![(0.0, 1.0), (1.0, 2.0)]), ("b".into(), vec![(0.0, 0.0)])]);
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<SimConfig>(r#"{"sytem": "extended"}"#).is_err());
        let c: SimConfig = serde_json::from_str(r#"{"L": 20.0, "grid": 128}"#).unwrap();
        assert_eq!((c.length, c.grid, c.system.as_str()), (20.0, 128, "extended"));
    }
}
