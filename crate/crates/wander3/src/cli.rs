//! Command-line front end: the `constant`, `analyze`, `extremal` and
//! `sweep` commands, key=value config files with per-command sections,
//! JSON reports (floats carry 17 significant digits) and CSV sweep output.
//!
//! Exit codes: 0 when every check passed, 1 when a check failed (a
//! non-positive margin, methods disagreeing beyond their combined error,
//! a ratio under the floor), 2 on usage or computation errors.

use crate::expr::Expression;
use crate::extremal::{run_extremal_experiment, ExtremalConfig};
use crate::metrics::oscillation_report;
use crate::ode::{integrate, CoefficientSpec, IntegrateOptions, State3};
use crate::sphere::{boundary_length_polyline, boundary_length_quadrature, l_omega};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Number, Value};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(
    name = "wander3",
    about = "Zero counts and phase-sphere wandering length for third-order linear ODEs",
    version
)]
pub struct Cli {
    /// Config file (key=value lines under [constant]/[analyze]/[extremal]/[sweep] sections)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write a JSON report to this path
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Relative integration tolerance
    #[arg(long, global = true)]
    pub rtol: Option<f64>,
    /// Absolute integration tolerance
    #[arg(long, global = true)]
    pub atol: Option<f64>,
    /// Seed for randomized commands
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compute the boundary-length constant by quadrature and polyline
    Constant(ConstantArgs),
    /// Integrate one equation and check the wandering-vs-zeros bound
    Analyze(AnalyzeArgs),
    /// Synthesize and measure the near-extremal equation
    Extremal(ExtremalArgs),
    /// Randomized bound stress test over trigonometric coefficients
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Default)]
pub struct ConstantArgs {
    /// Quadrature tolerance
    #[arg(long)]
    pub tol: Option<f64>,
    /// quadrature | polyline | both
    #[arg(long)]
    pub method: Option<String>,
    /// Polyline segment count (even)
    #[arg(long)]
    pub segments: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct AnalyzeArgs {
    /// Coefficient a(t) of y''' + a y'' + b y' + c y = 0
    #[arg(long)]
    pub a: Option<String>,
    /// Coefficient b(t)
    #[arg(long)]
    pub b: Option<String>,
    /// Coefficient c(t)
    #[arg(long)]
    pub c: Option<String>,
    /// Initial state as "y,dy,ddy"
    #[arg(long)]
    pub init: Option<String>,
    /// Horizon T
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct ExtremalArgs {
    /// Margin parameter of the construction
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of periods to integrate
    #[arg(long)]
    pub periods: Option<usize>,
    /// Also write the synthesized model tables (JSON) here
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SweepArgs {
    /// Number of random equations
    #[arg(long)]
    pub size: Option<usize>,
    /// Horizon per item
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Coefficient amplitude R (uniform in [-R, R])
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Write per-item CSV rows here
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Flat key=value config with one section per command.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    sections: HashMap<String, HashMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut sections: HashMap<String, HashMap<String, String>> = HashMap::new();
        let mut current = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                current = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    sections
                        .entry(current.clone())
                        .or_default()
                        .insert(k.trim().to_string(), v.trim().to_string());
                }
                None => {
                    return Err(format!(
                        "config line {}: expected key=value, got `{line}`",
                        lineno + 1
                    ))
                }
            }
        }
        Ok(ConfigFile { sections })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    /// CLI value wins; otherwise the section key; otherwise the default.
    pub fn resolve<T: FromStr + Clone>(
        &self,
        cli: Option<T>,
        section: &str,
        key: &str,
        default: T,
    ) -> Result<T, String> {
        if let Some(v) = cli {
            return Ok(v);
        }
        if let Some(raw) = self.sections.get(section).and_then(|s| s.get(key)) {
            return raw
                .parse::<T>()
                .map_err(|_| format!("config [{section}] {key} = `{raw}` does not parse"));
        }
        Ok(default)
    }

    pub fn resolve_opt<T: FromStr + Clone>(
        &self,
        cli: Option<T>,
        section: &str,
        key: &str,
    ) -> Result<Option<T>, String> {
        if let Some(v) = cli {
            return Ok(Some(v));
        }
        match self.sections.get(section).and_then(|s| s.get(key)) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| format!("config [{section}] {key} = `{raw}` does not parse")),
            None => Ok(None),
        }
    }
}

/// JSON number with 17 significant digits.
pub fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        match Number::from_str(&format!("{x:.16e}")) {
            Ok(n) => Value::Number(n),
            Err(_) => Value::String(format!("{x}")),
        }
    } else {
        Value::String(format!("{x}"))
    }
}

/// 17-significant-digit text form used in CSV and human output.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

const SCHEMA_VERSION: u64 = 1;

fn report_value(command: &str, config: Value, status: &str, results: Value, ms: f64) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "status": status,
        "timing_ms": json_f64(ms),
        "results": results,
    })
}

fn write_report(path: &Option<PathBuf>, report: &Value) -> Result<(), String> {
    if let Some(p) = path {
        let text = serde_json::to_string_pretty(report)
            .map_err(|e| format!("report serialization failed: {e}"))?;
        std::fs::write(p, text + "\n")
            .map_err(|e| format!("cannot write report {}: {e}", p.display()))?;
    }
    Ok(())
}

/// Entry point used by the binary. Returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap prints help/version through the error path with code 0
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let config = match &cli.config {
        Some(path) => match ConfigFile::load(path) {
            Ok(c) => c,
            Err(msg) => {
                eprintln!("error: {msg}");
                return 2;
            }
        },
        None => ConfigFile::default(),
    };
    let started = Instant::now();
    let outcome = match &cli.command {
        Command::Constant(args) => cmd_constant(&cli, &config, args),
        Command::Analyze(args) => cmd_analyze(&cli, &config, args),
        Command::Extremal(args) => cmd_extremal(&cli, &config, args),
        Command::Sweep(args) => cmd_sweep(&cli, &config, args),
    };
    match outcome {
        Ok((command, config_echo, results, ok)) => {
            let status = if ok { "ok" } else { "check_failed" };
            let ms = started.elapsed().as_secs_f64() * 1e3;
            let report = report_value(command, config_echo, status, results, ms);
            if let Err(msg) = write_report(&cli.out, &report) {
                eprintln!("error: {msg}");
                return 2;
            }
            if ok {
                0
            } else {
                1
            }
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            let ms = started.elapsed().as_secs_f64() * 1e3;
            let report = report_value("error", Value::Null, "error", json!({ "message": msg }), ms);
            let _ = write_report(&cli.out, &report);
            2
        }
    }
}

type CommandOutcome = Result<(&'static str, Value, Value, bool), String>;

fn cmd_constant(_cli: &Cli, config: &ConfigFile, args: &ConstantArgs) -> CommandOutcome {
    let tol = config.resolve(args.tol, "constant", "tol", 1e-10)?;
    let method = config.resolve(
        args.method.clone(),
        "constant",
        "method",
        "both".to_string(),
    )?;
    let segments = config.resolve(args.segments, "constant", "segments", 2_000_000usize)?;
    let config_echo = json!({
        "tol": json_f64(tol),
        "method": method,
        "segments": segments,
    });

    let mut results = Map::new();
    let mut ok = true;
    let mut quad_value = None;
    if method == "quadrature" || method == "both" {
        let q = boundary_length_quadrature(tol).map_err(|e| e.to_string())?;
        println!(
            "quadrature: L = {} (error estimate {:.3e})",
            sig17(q.value),
            q.error_estimate
        );
        results.insert(
            "quadrature".into(),
            json!({ "value": json_f64(q.value), "error_estimate": json_f64(q.error_estimate) }),
        );
        results.insert("value_over_two_pi".into(), json_f64(q.value / (2.0 * PI)));
        quad_value = Some(q);
    }
    if method == "polyline" || method == "both" {
        let p = boundary_length_polyline(segments).map_err(|e| e.to_string())?;
        println!(
            "polyline:   L = {} (error estimate {:.3e}, {} segments)",
            sig17(p.value),
            p.error_estimate,
            segments
        );
        results.insert(
            "polyline".into(),
            json!({ "value": json_f64(p.value), "error_estimate": json_f64(p.error_estimate), "segments": segments }),
        );
        if let Some(q) = quad_value {
            let gap = (q.value - p.value).abs();
            let budget = q.error_estimate + p.error_estimate + 1e-9;
            println!("agreement:  |difference| = {gap:.3e} (combined error budget {budget:.3e})");
            results.insert("methods_gap".into(), json_f64(gap));
            results.insert("methods_budget".into(), json_f64(budget));
            if gap > budget {
                ok = false;
            }
        }
    }
    if method != "quadrature" && method != "polyline" && method != "both" {
        return Err(format!("unknown method `{method}`"));
    }
    Ok(("constant", config_echo, Value::Object(results), ok))
}

fn parse_init(text: &str) -> Result<State3, String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!(
            "init `{text}` must be three comma-separated numbers"
        ));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p
            .parse::<f64>()
            .map_err(|_| format!("init component `{p}` does not parse"))?;
    }
    Ok(State3::new(v[0], v[1], v[2]))
}

struct AnalyzeOutput {
    results: Value,
    margin_ok: bool,
}

fn analyze_one(
    a: &str,
    b: &str,
    c: &str,
    init: State3,
    horizon: f64,
    opts: &IntegrateOptions,
) -> Result<AnalyzeOutput, String> {
    let ea = Expression::parse(a).map_err(|e| format!("coefficient a: {e}"))?;
    let eb = Expression::parse(b).map_err(|e| format!("coefficient b: {e}"))?;
    let ec = Expression::parse(c).map_err(|e| format!("coefficient c: {e}"))?;
    let spec = CoefficientSpec::from_expressions(ea, eb, ec);
    let traj = integrate(&spec, init, horizon, opts).map_err(|e| e.to_string())?;
    let rep = oscillation_report(&traj, l_omega()).map_err(|e| e.to_string())?;
    let results = json!({
        "nu": rep.nu,
        "zeros": rep.zeros.iter().map(|z| json!({"t": json_f64(z.t), "simple": z.simple})).collect::<Vec<_>>(),
        "gamma": json_f64(rep.gamma),
        "gamma_tol": json_f64(rep.gamma_tol),
        "bound": json_f64(rep.bound),
        "margin": json_f64(rep.margin),
        "phi_drop": json_f64(rep.phi_drop),
        "horizon": json_f64(rep.horizon),
    });
    Ok(AnalyzeOutput {
        margin_ok: rep.margin > 0.0,
        results,
    })
}

fn cmd_analyze(cli: &Cli, config: &ConfigFile, args: &AnalyzeArgs) -> CommandOutcome {
    let a = config.resolve(args.a.clone(), "analyze", "a", "0".to_string())?;
    let b = config.resolve(args.b.clone(), "analyze", "b", "0".to_string())?;
    let c = config.resolve(args.c.clone(), "analyze", "c", "0".to_string())?;
    let init_text = config.resolve(args.init.clone(), "analyze", "init", "1,0,0".to_string())?;
    let horizon = config.resolve(args.horizon, "analyze", "horizon", 50.0)?;
    let rtol = config.resolve(cli.rtol, "analyze", "rtol", 1e-9)?;
    let atol = config.resolve(cli.atol, "analyze", "atol", 1e-12)?;
    let init = parse_init(&init_text)?;
    let opts = IntegrateOptions::with_tolerances(rtol, atol);
    let config_echo = json!({
        "a": a, "b": b, "c": c,
        "init": init_text,
        "horizon": json_f64(horizon),
        "rtol": json_f64(rtol),
        "atol": json_f64(atol),
    });
    let out = analyze_one(&a, &b, &c, init, horizon, &opts)?;
    let r = &out.results;
    println!(
        "nu = {}, gamma = {}, bound = {}, margin = {}",
        r["nu"],
        sig17(r["gamma"].as_f64().unwrap_or(f64::NAN)),
        sig17(r["bound"].as_f64().unwrap_or(f64::NAN)),
        sig17(r["margin"].as_f64().unwrap_or(f64::NAN)),
    );
    if !out.margin_ok {
        println!("MARGIN CHECK FAILED: the bound should hold for every nonzero solution");
    }
    Ok(("analyze", config_echo, out.results, out.margin_ok))
}

fn cmd_extremal(cli: &Cli, config: &ConfigFile, args: &ExtremalArgs) -> CommandOutcome {
    let delta = config.resolve(args.delta, "extremal", "delta", 0.2)?;
    let periods = config.resolve(args.periods, "extremal", "periods", 10usize)?;
    let rtol = config.resolve(cli.rtol, "extremal", "rtol", 5e-13)?;
    let atol = config.resolve(cli.atol, "extremal", "atol", 1e-14)?;
    let track_tol = config.resolve(None, "extremal", "track_tol", 1e-3)?;
    let budget = config.resolve(None, "extremal", "growth_budget", 8.0)?;
    let model_out = config.resolve_opt(args.model_out.clone(), "extremal", "model_out")?;

    let mut ecfg = ExtremalConfig::new(delta);
    ecfg.periods = periods;
    ecfg.rtol = rtol;
    ecfg.atol = atol;
    ecfg.track_tol = track_tol;
    ecfg.growth_budget = budget;
    let config_echo = json!({
        "delta": json_f64(delta),
        "periods": periods,
        "rtol": json_f64(rtol),
        "atol": json_f64(atol),
        "track_tol": json_f64(track_tol),
        "growth_budget": json_f64(budget),
    });

    let rep = run_extremal_experiment(&ecfg).map_err(|e| e.to_string())?;
    let floor = rep.ratio_floor;
    let cap = floor + delta / (2.0 * PI);
    println!(
        "delta = {delta}: T = {}, nu = {} ({} per period), gamma = {}",
        sig17(rep.period),
        rep.nu_total,
        rep.nu_per_period,
        sig17(rep.gamma_total)
    );
    println!(
        "mu_est = {}, nu_est = {}, ratio = {}",
        sig17(rep.mu_est),
        sig17(rep.nu_est),
        sig17(rep.ratio)
    );
    println!(
        "floor L/(2 pi) = {}, construction cap = {}",
        sig17(floor),
        sig17(cap)
    );
    println!(
        "track deviation: phi {:.3e}, theta {:.3e}; windows/period {}",
        rep.track_dev_phi, rep.track_dev_theta, rep.windows_per_period
    );
    let ok = rep.ratio > floor && rep.ratio < cap && rep.track_dev_phi < track_tol;
    if !ok {
        println!("EXTREMAL CHECK FAILED");
    }
    if let Some(path) = &model_out {
        let curve = crate::extremal::build_boundary_curve(delta, rep.width, ecfg.points_per_width)
            .map_err(|e| e.to_string())?;
        let model = crate::extremal::ExtremalModel::new(curve).map_err(|e| e.to_string())?;
        let tables = model.export_tables(4000);
        let rows: Vec<Value> = tables
            .rows
            .iter()
            .map(|r| {
                json!({
                    "t": json_f64(r.t), "phi": json_f64(r.phi),
                    "f": json_f64(r.f), "f_prime": json_f64(r.f_prime),
                    "a": json_f64(r.a), "b": json_f64(r.b), "c": json_f64(r.c),
                })
            })
            .collect();
        let doc = json!({
            "delta": json_f64(tables.delta),
            "width": json_f64(tables.width),
            "period": json_f64(tables.period),
            "curve_length": json_f64(tables.curve_length),
            "rows": rows,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap() + "\n")
            .map_err(|e| format!("cannot write model tables: {e}"))?;
    }
    let results = json!({
        "period": json_f64(rep.period),
        "curve_length": json_f64(rep.curve_length),
        "w11_distance": json_f64(rep.w11_distance),
        "width": json_f64(rep.width),
        "windows_per_period": rep.windows_per_period,
        "nu_per_period": rep.nu_per_period,
        "nu_total": rep.nu_total,
        "gamma_per_period": json_f64(rep.gamma_per_period),
        "gamma_total": json_f64(rep.gamma_total),
        "mu_est": json_f64(rep.mu_est),
        "nu_est": json_f64(rep.nu_est),
        "ratio": json_f64(rep.ratio),
        "ratio_floor": json_f64(floor),
        "ratio_cap": json_f64(cap),
        "track_dev_phi": json_f64(rep.track_dev_phi),
        "track_dev_theta": json_f64(rep.track_dev_theta),
        "residual_max": json_f64(rep.residual_max),
    });
    Ok(("extremal", config_echo, results, ok))
}

/// Random degree-2 trigonometric polynomial with coefficients uniform in
/// [-amp, amp], emitted as expression source so the echo reproduces the item
/// exactly.
fn random_trig_source(rng: &mut ChaCha8Rng, amp: f64) -> String {
    let q: Vec<f64> = (0..5).map(|_| rng.gen_range(-amp..=amp)).collect();
    format!(
        "({:e})+({:e})*cos(t)+({:e})*sin(t)+({:e})*cos(2*t)+({:e})*sin(2*t)",
        q[0], q[1], q[2], q[3], q[4]
    )
}

fn random_unit_state(rng: &mut ChaCha8Rng) -> State3 {
    loop {
        let v: [f64; 3] = [
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-3 && n <= 1.0 {
            return State3::new(v[0] / n, v[1] / n, v[2] / n);
        }
    }
}

struct SweepRow {
    index: usize,
    a: String,
    b: String,
    c: String,
    init: State3,
    outcome: Result<(usize, f64, f64, f64), String>,
}

pub const SWEEP_CSV_HEADER: &str = "index,nu,gamma,bound,margin,status,a,b,c,y0,dy0,ddy0";

fn sweep_csv_row(row: &SweepRow) -> String {
    match &row.outcome {
        Ok((nu, gamma, bound, margin)) => format!(
            "{},{},{},{},{},ok,\"{}\",\"{}\",\"{}\",{},{},{}",
            row.index,
            nu,
            sig17(*gamma),
            sig17(*bound),
            sig17(*margin),
            row.a,
            row.b,
            row.c,
            sig17(row.init.y),
            sig17(row.init.dy),
            sig17(row.init.ddy),
        ),
        Err(_) => format!(
            "{},,,,,integration_error,\"{}\",\"{}\",\"{}\",{},{},{}",
            row.index,
            row.a,
            row.b,
            row.c,
            sig17(row.init.y),
            sig17(row.init.dy),
            sig17(row.init.ddy),
        ),
    }
}

fn cmd_sweep(cli: &Cli, config: &ConfigFile, args: &SweepArgs) -> CommandOutcome {
    let size = config.resolve(args.size, "sweep", "size", 100usize)?;
    let horizon = config.resolve(args.horizon, "sweep", "horizon", 50.0)?;
    let amplitude = config.resolve(args.amplitude, "sweep", "amplitude", 1.0)?;
    let seed = config.resolve(cli.seed, "sweep", "seed", 42u64)?;
    let rtol = config.resolve(cli.rtol, "sweep", "rtol", 1e-9)?;
    let atol = config.resolve(cli.atol, "sweep", "atol", 1e-12)?;
    let csv_path = config.resolve_opt(args.csv.clone(), "sweep", "csv")?;
    let config_echo = json!({
        "size": size,
        "horizon": json_f64(horizon),
        "amplitude": json_f64(amplitude),
        "seed": seed,
        "rtol": json_f64(rtol),
        "atol": json_f64(atol),
    });
    let opts = IntegrateOptions::with_tolerances(rtol, atol);

    let rows: Vec<SweepRow> = (0..size)
        .into_par_iter()
        .map(|index| {
            // one independent, reproducible stream per item
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64 + 1);
            let a = random_trig_source(&mut rng, amplitude);
            let b = random_trig_source(&mut rng, amplitude);
            let c = random_trig_source(&mut rng, amplitude);
            let init = random_unit_state(&mut rng);
            let outcome = analyze_one(&a, &b, &c, init, horizon, &opts).map(|out| {
                let r = &out.results;
                (
                    r["nu"].as_u64().unwrap_or(0) as usize,
                    r["gamma"].as_f64().unwrap_or(f64::NAN),
                    r["bound"].as_f64().unwrap_or(f64::NAN),
                    r["margin"].as_f64().unwrap_or(f64::NAN),
                )
            });
            SweepRow {
                index,
                a,
                b,
                c,
                init,
                outcome,
            }
        })
        .collect();

    let mut csv = String::from(SWEEP_CSV_HEADER);
    csv.push('\n');
    let mut min_margin = f64::INFINITY;
    let mut violations = 0usize;
    let mut errors = 0usize;
    for row in &rows {
        csv.push_str(&sweep_csv_row(row));
        csv.push('\n');
        match &row.outcome {
            Ok((_, _, _, margin)) => {
                min_margin = min_margin.min(*margin);
                if *margin <= 0.0 {
                    violations += 1;
                }
            }
            Err(_) => errors += 1,
        }
    }
    if let Some(path) = &csv_path {
        std::fs::write(path, &csv).map_err(|e| format!("cannot write CSV: {e}"))?;
    }
    println!(
        "sweep: {size} items, min margin = {}, violations = {violations}, integration errors = {errors}",
        if min_margin.is_finite() { sig17(min_margin) } else { "n/a".into() }
    );
    let results = json!({
        "size": size,
        "min_margin": json_f64(min_margin),
        "violations": violations,
        "integration_errors": errors,
        "csv_header": SWEEP_CSV_HEADER,
        "rows": rows.iter().map(|r| match &r.outcome {
            Ok((nu, gamma, bound, margin)) => json!({
                "index": r.index, "nu": nu,
                "gamma": json_f64(*gamma), "bound": json_f64(*bound),
                "margin": json_f64(*margin), "status": "ok",
            }),
            Err(msg) => json!({ "index": r.index, "status": "integration_error", "message": msg }),
        }).collect::<Vec<_>>(),
    });
    Ok(("sweep", config_echo, results, violations == 0))
}

/// Deterministic CSV bytes for a sweep; exposed for reproducibility tests.
pub fn sweep_csv_bytes(
    size: usize,
    seed: u64,
    horizon: f64,
    amplitude: f64,
    rtol: f64,
    atol: f64,
) -> Vec<u8> {
    let opts = IntegrateOptions::with_tolerances(rtol, atol);
    let rows: Vec<SweepRow> = (0..size)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64 + 1);
            let a = random_trig_source(&mut rng, amplitude);
            let b = random_trig_source(&mut rng, amplitude);
            let c = random_trig_source(&mut rng, amplitude);
            let init = random_unit_state(&mut rng);
            let outcome = analyze_one(&a, &b, &c, init, horizon, &opts).map(|out| {
                let r = &out.results;
                (
                    r["nu"].as_u64().unwrap_or(0) as usize,
                    r["gamma"].as_f64().unwrap_or(f64::NAN),
                    r["bound"].as_f64().unwrap_or(f64::NAN),
                    r["margin"].as_f64().unwrap_or(f64::NAN),
                )
            });
            SweepRow {
                index,
                a,
                b,
                c,
                init,
                outcome,
            }
        })
        .collect();
    let mut csv = String::from(SWEEP_CSV_HEADER);
    csv.push('\n');
    for row in &rows {
        csv.push_str(&sweep_csv_row(row));
        csv.push('\n');
    }
    csv.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_sections_and_overrides() {
        let cfg = ConfigFile::parse(
            "# comment\n[analyze]\na = sin(t)\nhorizon = 12.5\n\n[sweep]\nsize = 7\n",
        )
        .unwrap();
        let a: String = cfg.resolve(None, "analyze", "a", "0".to_string()).unwrap();
        assert_eq!(a, "sin(t)");
        let h: f64 = cfg.resolve(None, "analyze", "horizon", 1.0).unwrap();
        assert_eq!(h, 12.5);
        // CLI wins
        let h: f64 = cfg.resolve(Some(3.0), "analyze", "horizon", 1.0).unwrap();
        assert_eq!(h, 3.0);
        // default when absent
        let s: usize = cfg.resolve(None, "analyze", "size", 5).unwrap();
        assert_eq!(s, 5);
        assert!(ConfigFile::parse("garbage line").is_err());
    }

    #[test]
    fn json_floats_carry_17_digits() {
        let v = json_f64(std::f64::consts::PI);
        assert_eq!(v.to_string(), "3.1415926535897931e+0");
    }

    #[test]
    fn analyze_sin_has_positive_margin() {
        let out = analyze_one(
            "0",
            "1",
            "0",
            State3::new(0.0, 1.0, 0.0),
            20.0 * PI,
            &IntegrateOptions::default(),
        )
        .unwrap();
        assert!(out.margin_ok);
        assert_eq!(out.results["nu"], 21);
        let margin = out.results["margin"].as_f64().unwrap();
        assert!((margin - 30.23409521559886).abs() < 1e-4, "{margin}");
    }

    #[test]
    fn analyze_reports_parse_errors() {
        let r = analyze_one(
            "t++",
            "0",
            "0",
            State3::new(1.0, 0.0, 0.0),
            1.0,
            &IntegrateOptions::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn random_sources_reparse_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let src = random_trig_source(&mut rng, 1.0);
            let e = Expression::parse(&src).unwrap();
            assert_eq!(e.to_string().parse::<Expression>().unwrap(), e);
            assert!(e.eval(0.37).unwrap().is_finite());
        }
    }

    #[test]
    fn sweep_is_byte_deterministic() {
        let a = sweep_csv_bytes(4, 42, 20.0, 1.0, 1e-9, 1e-12);
        let b = sweep_csv_bytes(4, 42, 20.0, 1.0, 1e-9, 1e-12);
        assert_eq!(a, b);
        let c = sweep_csv_bytes(4, 43, 20.0, 1.0, 1e-9, 1e-12);
        assert_ne!(a, c);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(SWEEP_CSV_HEADER));
        assert_eq!(text.lines().count(), 5);
        for line in text.lines().skip(1) {
            assert!(line.contains(",ok,"), "margin rows expected: {line}");
        }
    }

    #[test]
    fn run_reports_errors_with_code_2() {
        let code = run(["wander3", "analyze", "--a", "t++", "--horizon", "1"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn run_constant_writes_report() {
        let path = std::env::temp_dir().join("wander3_constant_report_test.json");
        let _ = std::fs::remove_file(&path);
        let code = run([
            "wander3",
            "constant",
            "--segments",
            "20000",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let text = std::fs::read_to_string(&path).unwrap();
        let doc: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["status"], "ok");
        assert_eq!(doc["schema_version"], 1);
        let v = doc["results"]["quadrature"]["value"].as_f64().unwrap();
        assert!((v - 4.074719732024625).abs() < 1e-9);
        let _ = std::fs::remove_file(&path);
    }
}
