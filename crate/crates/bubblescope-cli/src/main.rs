//! Command-line surface: fit, scan, leadlag, reflexivity and synth, with
//! stable file formats and exit codes scripts can branch on.
//!
//! Exit codes: 0 success (a Valid diagnosis for `fit`), 2 clean NoBubble
//! diagnosis, 1 any error.

mod report;

use anyhow::{bail, Context};
use bubblescope::{
    align, calibrate_ensemble, critical_window, ensemble_diagnosis, fit_hawkes, generate_lppls,
    ingest_csv, ingest_events, lag_scan, parse_timestamp, scan, simulate_hawkes, standardize,
    AlignMode, Error, FitConfig, FitResult, FitStatus, HawkesFitConfig, LpplsParams, SynthSpec,
    TimeGrid,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use report::Report;
use serde::Deserialize;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bubblescope", version, about = "Bubble diagnostics toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// What to print on stdout: the JSON report or the primary CSV table.
    #[arg(long, value_enum, default_value_t = OutputFormat::Json, global = true)]
    format: OutputFormat,

    /// Prefix for output files (defaults to the input path plus the command
    /// name).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the bubble model on a price CSV and report the
    /// critical-time window.
    Fit(FitArgs),
    /// Rerun the diagnosis at a sequence of as-of dates, using only data
    /// available at each one.
    Scan(ScanArgs),
    /// Lagged cross-correlation between two series: which leads, by how much.
    Leadlag(LeadlagArgs),
    /// Degree of self-excitation (branching ratio) of an event stream.
    Reflexivity(ReflexivityArgs),
    /// Generate synthetic data from a JSON spec.
    Synth(SynthArgs),
}

#[derive(Args)]
struct CalibrationFlags {
    /// Number of shrinking windows in the ensemble.
    #[arg(long, default_value_t = 8)]
    windows: usize,

    /// Multi-start seeds per window calibration.
    #[arg(long, default_value_t = 50)]
    starts: usize,

    /// Random seed.
    #[arg(long, env = "BUBBLESCOPE_SEED", default_value_t = 42)]
    seed: u64,

    /// Upper bound on the critical time, as a fraction of the window length
    /// past the last observation.
    #[arg(long, default_value_t = 0.5)]
    tc_max_frac: f64,

    /// Bounds for the power exponent, as `lo,hi`.
    #[arg(long, value_parser = parse_pair, default_value = "0.1,0.9")]
    m_bounds: (f64, f64),

    /// Bounds for the log-frequency, as `lo,hi`.
    #[arg(long, value_parser = parse_pair, default_value = "2,25")]
    omega_bounds: (f64, f64),

    /// Confidence level of the critical-time window.
    #[arg(long, default_value_t = 0.8)]
    confidence: f64,
}

impl CalibrationFlags {
    fn to_config(&self) -> FitConfig {
        FitConfig {
            starts: self.starts,
            seed: self.seed,
            tc_max_frac: self.tc_max_frac,
            m_bounds: self.m_bounds,
            omega_bounds: self.omega_bounds,
            ..FitConfig::default()
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Price CSV with header `date,value`.
    csv: PathBuf,

    /// Use only data at or before this date (ISO or decimal year);
    /// defaults to the last row.
    #[arg(long)]
    as_of: Option<String>,

    #[command(flatten)]
    calibration: CalibrationFlags,
}

#[derive(Args)]
struct ScanArgs {
    /// Price CSV with header `date,value`.
    csv: PathBuf,

    /// Spacing between as-of dates, in years.
    #[arg(long)]
    step: f64,

    #[command(flatten)]
    calibration: CalibrationFlags,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Debug)]
enum DifferenceMode {
    None,
    A,
    B,
    Both,
}

#[derive(Args)]
struct LeadlagArgs {
    /// First series (the reference grid).
    csv_a: PathBuf,
    /// Second series; interpolated onto the first one's timestamps.
    csv_b: PathBuf,

    /// Largest lag to scan, in sampling steps of the first series.
    #[arg(long, default_value_t = 12)]
    max_lag: usize,

    /// Difference one or both series before scanning (default: levels).
    #[arg(long, value_enum, default_value_t = DifferenceMode::None)]
    difference: DifferenceMode,
}

#[derive(Args)]
struct ReflexivityArgs {
    /// One-column CSV of event timestamps.
    csv: PathBuf,

    /// Observation end time; defaults to the last event.
    #[arg(long)]
    horizon: Option<f64>,

    /// Multi-start seeds for the likelihood search.
    #[arg(long, default_value_t = 16)]
    starts: usize,

    /// Random seed.
    #[arg(long, env = "BUBBLESCOPE_SEED", default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    /// JSON spec; see the README for the two spec kinds.
    spec: PathBuf,
    /// Output CSV path.
    output: PathBuf,
}

fn parse_pair(text: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected `lo,hi`, got `{text}`"));
    }
    let lo: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| format!("bad number `{}`", parts[0]))?;
    let hi: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| format!("bad number `{}`", parts[1]))?;
    Ok((lo, hi))
}

fn main() -> ExitCode {
    // Exit code 2 is reserved for the NoBubble diagnosis, so usage errors
    // must not use clap's default exit code of 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Fit(args) => cmd_fit(&cli, args),
        Command::Scan(args) => cmd_scan(&cli, args),
        Command::Leadlag(args) => cmd_leadlag(&cli, args),
        Command::Reflexivity(args) => cmd_reflexivity(&cli, args),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn read_input(path: &Path) -> anyhow::Result<(Vec<u8>, String)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone())
        .with_context(|| format!("{} is not valid UTF-8", path.display()))?;
    Ok((bytes, text))
}

fn out_prefix(cli: &Cli, input: &Path, command: &str) -> PathBuf {
    match &cli.out {
        Some(prefix) => prefix.clone(),
        None => {
            let stem = input.with_extension("");
            let mut name = stem.file_name().unwrap_or_default().to_os_string();
            name.push(format!("-{command}"));
            stem.with_file_name(name)
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn write_artifact(report: &mut Report, path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    report.artifacts.push(path.display().to_string());
    Ok(())
}

/// Write the report itself; the data files it points at are already in
/// `artifacts`.
fn write_report(report: &Report, path: &Path) -> anyhow::Result<()> {
    std::fs::write(path, report.to_json()?).with_context(|| format!("writing {}", path.display()))
}

fn status_label(status: &FitStatus) -> String {
    match status {
        FitStatus::Valid => "Valid".into(),
        FitStatus::NoBubble => "NoBubble".into(),
        FitStatus::Rejected(reason) => format!("Rejected({})", reason.replace(',', ";")),
    }
}

fn fits_table(fits: &[FitResult]) -> String {
    let mut out = String::from("t1,t2,n_points,status,tc,m,omega,a,b,c1,c2,sse\n");
    for f in fits {
        out.push_str(&format!(
            "{:.6},{:.6},{},{},{:.6},{:.6},{:.6},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}\n",
            f.window.0,
            f.window.1,
            f.n_points,
            status_label(&f.status),
            f.params.tc,
            f.params.m,
            f.params.omega,
            f.params.a,
            f.params.b,
            f.params.c1,
            f.params.c2,
            f.sse,
        ));
    }
    out
}

fn emit(cli: &Cli, report: &Report, csv: &str) -> anyhow::Result<()> {
    match cli.format {
        OutputFormat::Json => println!("{}", report.to_json()?),
        OutputFormat::Csv => print!("{csv}"),
    }
    Ok(())
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> anyhow::Result<u8> {
    let (bytes, text) = read_input(&args.csv)?;
    let series = ingest_csv(&text)?;
    let series = match &args.as_of {
        Some(raw) => {
            let cutoff = parse_timestamp(raw)?;
            series.truncated_at(cutoff)?
        }
        None => series,
    };
    let config = args.calibration.to_config();
    let fits = calibrate_ensemble(&series, &config, args.calibration.windows)?;
    let diagnosis = ensemble_diagnosis(&fits);
    let window = match critical_window(&fits, args.calibration.confidence) {
        Ok(w) => Some(w),
        Err(Error::NoValidFits) => None,
        Err(e) => return Err(e.into()),
    };

    let prefix = out_prefix(cli, &args.csv, "fit");
    let mut report = Report::new(
        "fit",
        &[&bytes],
        json!({
            "fit": config,
            "windows": args.calibration.windows,
            "confidence": args.calibration.confidence,
            "as_of": series.last_time(),
        }),
        json!({
            "diagnosis": diagnosis,
            "fits": fits,
            "critical_window": window,
        }),
    );

    let observed = series.to_log()?;
    write_artifact(
        &mut report,
        &with_suffix(&prefix, ".observed.csv"),
        &observed.to_csv(),
    )?;

    let mut curves = String::from("window,status,date,value\n");
    for (i, fit) in fits.iter().enumerate() {
        let times: Vec<f64> = series
            .times()
            .iter()
            .copied()
            .filter(|&t| t >= fit.window.0)
            .collect();
        if let Ok(curve) = bubblescope::lppls_series(&fit.params, &times) {
            for (t, v) in curve.times().iter().zip(curve.values()) {
                curves.push_str(&format!("{i},{},{t:.6},{v}\n", status_label(&fit.status)));
            }
        }
    }
    write_artifact(&mut report, &with_suffix(&prefix, ".fits.csv"), &curves)?;

    let mut band = String::from("lower,upper,confidence,n_fits\n");
    if let Some(w) = &window {
        band.push_str(&format!(
            "{:.6},{:.6},{},{}\n",
            w.lower, w.upper, w.confidence, w.n_fits
        ));
    }
    write_artifact(&mut report, &with_suffix(&prefix, ".band.csv"), &band)?;
    write_report(&report, &with_suffix(&prefix, ".report.json"))?;

    emit(cli, &report, &fits_table(&fits))?;
    match diagnosis {
        FitStatus::Valid => Ok(0),
        _ => {
            eprintln!("diagnosis: {}", status_label(&diagnosis));
            Ok(2)
        }
    }
}

fn scan_table(rows: &[bubblescope::ScanRow]) -> String {
    let mut out = String::from("as_of,status,lower,upper\n");
    for row in rows {
        let (lower, upper) = row
            .window
            .map(|w| (format!("{:.6}", w.lower), format!("{:.6}", w.upper)))
            .unwrap_or_default();
        out.push_str(&format!(
            "{:.6},{},{lower},{upper}\n",
            row.as_of,
            status_label(&row.status)
        ));
    }
    out
}

fn cmd_scan(cli: &Cli, args: &ScanArgs) -> anyhow::Result<u8> {
    if args.step.is_nan() || args.step <= 0.0 {
        bail!("--step must be positive, got {}", args.step);
    }
    let (bytes, text) = read_input(&args.csv)?;
    let series = ingest_csv(&text)?;
    let config = args.calibration.to_config();
    let rows = scan(
        &series,
        &config,
        args.calibration.windows,
        args.calibration.confidence,
        args.step,
    )?;

    let prefix = out_prefix(cli, &args.csv, "scan");
    let mut report = Report::new(
        "scan",
        &[&bytes],
        json!({
            "fit": config,
            "windows": args.calibration.windows,
            "confidence": args.calibration.confidence,
            "step": args.step,
        }),
        json!({ "rows": rows }),
    );
    let table = scan_table(&rows);
    write_artifact(&mut report, &with_suffix(&prefix, ".scan.csv"), &table)?;
    write_report(&report, &with_suffix(&prefix, ".report.json"))?;
    emit(cli, &report, &table)?;
    Ok(0)
}

fn cmd_leadlag(cli: &Cli, args: &LeadlagArgs) -> anyhow::Result<u8> {
    let (bytes_a, text_a) = read_input(&args.csv_a)?;
    let (bytes_b, text_b) = read_input(&args.csv_b)?;
    let series_a = ingest_csv(&text_a)?;
    let series_b = ingest_csv(&text_b)?;

    let (mut a, mut b) = align(&series_a, &series_b, AlignMode::InterpolateOntoA)?;
    let (diff_a, diff_b) = match args.difference {
        DifferenceMode::None => (false, false),
        DifferenceMode::A => (true, false),
        DifferenceMode::B => (false, true),
        DifferenceMode::Both => (true, true),
    };
    if diff_a {
        a = bubblescope::leadlag::difference(&a)?;
    }
    if diff_b {
        b = bubblescope::leadlag::difference(&b)?;
    }
    // Differencing one side shortens it by a point; re-intersect.
    let (a, b) = align(&a, &b, AlignMode::Intersect)?;
    let a = standardize(&a)?;
    let b = standardize(&b)?;
    let result = lag_scan(&a, &b, args.max_lag)?;

    let prefix = out_prefix(cli, &args.csv_a, "leadlag");
    let mut report = Report::new(
        "leadlag",
        &[&bytes_a, &bytes_b],
        json!({
            "max_lag": args.max_lag,
            "difference": format!("{:?}", args.difference).to_lowercase(),
        }),
        json!({
            "best_lag": result.best_lag,
            "best_correlation": result.best_correlation,
            "n_points": a.len(),
        }),
    );
    let mut curve = String::from("lag,correlation\n");
    for (lag, c) in &result.curve {
        curve.push_str(&format!("{lag},{c}\n"));
    }
    write_artifact(&mut report, &with_suffix(&prefix, ".curve.csv"), &curve)?;
    write_report(&report, &with_suffix(&prefix, ".report.json"))?;
    emit(cli, &report, &curve)?;
    Ok(0)
}

fn cmd_reflexivity(cli: &Cli, args: &ReflexivityArgs) -> anyhow::Result<u8> {
    let (bytes, text) = read_input(&args.csv)?;
    let events = ingest_events(&text, args.horizon)?;
    let config = HawkesFitConfig {
        starts: args.starts,
        seed: args.seed,
        ..HawkesFitConfig::default()
    };
    let fit = fit_hawkes(&events, &config)?;

    let prefix = out_prefix(cli, &args.csv, "reflexivity");
    let report = Report::new(
        "reflexivity",
        &[&bytes],
        json!({
            "fit": config,
            "horizon": events.horizon(),
            "n_events": events.len(),
        }),
        serde_json::to_value(fit)?,
    );
    write_report(&report, &with_suffix(&prefix, ".report.json"))?;
    let csv = format!(
        "mu,alpha,beta,branching_ratio,loglik,stationarity_warning\n{},{},{},{},{},{}\n",
        fit.mu, fit.alpha, fit.beta, fit.branching_ratio, fit.loglik, fit.stationarity_warning
    );
    emit(cli, &report, &csv)?;
    if fit.stationarity_warning {
        eprintln!(
            "warning: branching ratio {:.3} >= 1 (non-stationary regime)",
            fit.branching_ratio
        );
    }
    Ok(0)
}

/// The two recipes `synth` understands.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum SynthSpecFile {
    Lppls {
        params: LpplsParams,
        times: TimeGrid,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        seed: u64,
    },
    Hawkes {
        mu: f64,
        alpha: f64,
        beta: f64,
        horizon: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<u8> {
    let (_, text) = read_input(&args.spec)?;
    let spec: SynthSpecFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    let csv = match spec {
        SynthSpecFile::Lppls {
            params,
            times,
            noise_sigma,
            seed,
        } => {
            let series = generate_lppls(&SynthSpec {
                params,
                times,
                noise_sigma,
                seed,
            })?;
            series.to_csv()
        }
        SynthSpecFile::Hawkes {
            mu,
            alpha,
            beta,
            horizon,
            seed,
        } => {
            let events = simulate_hawkes(mu, alpha, beta, horizon, seed)?;
            let mut out = String::from("time\n");
            for t in events.times() {
                out.push_str(&format!("{t}\n"));
            }
            out
        }
    };
    std::fs::write(&args.output, csv)
        .with_context(|| format!("writing {}", args.output.display()))?;
    eprintln!("wrote {}", args.output.display());
    Ok(0)
}
