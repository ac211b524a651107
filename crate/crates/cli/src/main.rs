//! `twinspect` — calibrate, monitor, simulate, analyze.

mod spec;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use twinspect::calibration;
use twinspect::config::{DetectorKind, MonitorConfig, ScaleMode};
use twinspect::error::Error;
use twinspect::monitor::MonitorSession;
use twinspect::pipeline::{self, AnalyzeOptions, CsvSchema, PipelineScale};
use twinspect::simlab;
use twinspect::table::{GridSpec, QuantileTable, TableStore};

#[derive(Parser)]
#[command(name = "twinspect", version, about = "Streaming change-point detection with two-window inspection detectors")]
struct Cli {
    /// Worker threads for calibration draws and simulation replications
    /// (0 = all cores). Results are identical for any thread count.
    #[arg(long, global = true, default_value_t = 0, env = "TWINSPECT_THREADS")]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a limiting law and store its quantile table.
    Calibrate(CalibrateArgs),
    /// Monitor a stream of newline-delimited values.
    Monitor(MonitorArgs),
    /// Run a simulation study described by a spec file.
    Simulate(SimulateArgs),
    /// Analyze a CSV time series with the full detector suite.
    Analyze(AnalyzeArgs),
    /// List and verify quantile tables.
    Tables(TablesArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LawArg {
    #[value(name = "l-tc")]
    LTc,
    #[value(name = "l-sn")]
    LSn,
    #[value(name = "l-f")]
    LF,
    #[value(name = "null-c")]
    NullC,
    #[value(name = "null-pc")]
    NullPc,
    #[value(name = "null-fc")]
    NullFc,
    #[value(name = "null-wc")]
    NullWc,
    #[value(name = "null-mm")]
    NullMm,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Which law to simulate.
    #[arg(long, value_enum)]
    law: LawArg,
    #[arg(long, default_value_t = MonitorConfig::DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = MonitorConfig::DEFAULT_C0)]
    c0: f64,
    #[arg(long, default_value_t = MonitorConfig::DEFAULT_ETA)]
    eta: f64,
    /// Modified-MOSUM window fraction.
    #[arg(long, default_value_t = MonitorConfig::DEFAULT_B)]
    b: f64,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long, default_value_t = 1729, env = "TWINSPECT_SEED")]
    seed: u64,
    /// Brownian grid: largest simulated time.
    #[arg(long, default_value_t = 1000.0)]
    t_max: f64,
    /// Brownian grid: fine-region step.
    #[arg(long, default_value_t = 0.01)]
    fine_step: f64,
    /// Finite-sample calibration size (L_F and null simulations).
    #[arg(long, default_value_t = 200)]
    n_cal: usize,
    /// Finite-sample horizon in multiples of n_cal.
    #[arg(long, default_value_t = 50)]
    t_horizon: usize,
    /// Quarter the default Monte Carlo effort.
    #[arg(long)]
    fast: bool,
    /// Output path (default: <law>.json in the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MonitorArgs {
    #[arg(long)]
    detector: String,
    /// Quantile table calibrating the detector (not used by RC).
    #[arg(long, env = "TWINSPECT_TABLE")]
    table: Option<PathBuf>,
    #[arg(long)]
    n_train: usize,
    #[arg(long, default_value_t = MonitorConfig::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = MonitorConfig::DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value_t = MonitorConfig::DEFAULT_C0)]
    c0: f64,
    #[arg(long, default_value_t = MonitorConfig::DEFAULT_ETA)]
    eta: f64,
    #[arg(long, default_value_t = MonitorConfig::DEFAULT_B)]
    b: f64,
    /// Scale mode: known:<sigma2> | train | lrv | lrv:<lags> | none.
    #[arg(long)]
    scale: Option<String>,
    /// Noise Orlicz norm (RC only).
    #[arg(long)]
    orlicz_norm: Option<f64>,
    /// RC threshold constant.
    #[arg(long, default_value_t = MonitorConfig::DEFAULT_RC_CONSTANT)]
    rc_constant: f64,
    /// Input file of newline-delimited values ("-" = stdin).
    #[arg(long, default_value = "-")]
    input: String,
    /// Emit one JSON event per monitoring step.
    #[arg(long)]
    trace: bool,
    /// Stop after this many monitoring steps.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Experiment spec file (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Directory of quantile tables.
    #[arg(long, default_value = "tables", env = "TWINSPECT_TABLES")]
    tables: PathBuf,
    /// Output directory for <id>.csv and <id>.json.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Use the spec's reduced replication count.
    #[arg(long)]
    fast: bool,
    /// Override the spec's seed.
    #[arg(long, env = "TWINSPECT_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input CSV (omit when using --synthetic).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "date")]
    date_col: String,
    #[arg(long, default_value = "value")]
    value_col: String,
    #[arg(long, default_value = "%Y-%m-%d")]
    date_format: String,
    /// Length of the training window in days.
    #[arg(long, default_value_t = 31)]
    training_days: usize,
    #[arg(long, default_value_t = MonitorConfig::DEFAULT_ALPHA)]
    alpha: f64,
    /// Variance source for scaled detectors: monitoring | training.
    #[arg(long, default_value = "monitoring")]
    scale: String,
    /// Comma-separated detector subset (default: all).
    #[arg(long)]
    detectors: Option<String>,
    #[arg(long, default_value = "tables", env = "TWINSPECT_TABLES")]
    tables: PathBuf,
    /// Report output path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for per-detector trace CSVs (k, statistic, threshold).
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Generate and analyze a synthetic demonstration series of this many
    /// days (level shift mid-series) instead of reading --input.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Write the synthetic series to this CSV for inspection.
    #[arg(long)]
    synthetic_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1729, env = "TWINSPECT_SEED")]
    seed: u64,
}

#[derive(Args)]
struct TablesArgs {
    #[arg(long, default_value = "tables", env = "TWINSPECT_TABLES")]
    dir: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .expect("rayon pool");
    }
    let outcome = match cli.command {
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Monitor(args) => cmd_monitor(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Tables(args) => cmd_tables(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

/// 0 success, 2 usage, 3 data, 4 config/table mismatch.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) => 2,
        Error::TableMismatch(_) | Error::MalformedTable(_) => 4,
        _ => 3,
    }
}

fn cmd_calibrate(args: CalibrateArgs) -> twinspect::Result<()> {
    let draws = if args.fast { args.draws.min(1000) } else { args.draws };
    let grid = GridSpec::Brownian {
        fine_step: args.fine_step,
        fine_until: 10.0,
        mid_step: 0.1,
        mid_until: 100.0,
        coarse_step: 1.0,
        t_max: args.t_max,
    };
    let (label, table) = match args.law {
        LawArg::LSn => (
            "l_sn",
            calibration::simulate_l_sn(args.beta, args.c0, &grid, draws, args.seed)?,
        ),
        LawArg::LTc => (
            "l_tc",
            calibration::simulate_l_tc(args.beta, args.c0, &grid, draws, args.seed)?,
        ),
        LawArg::LF => (
            "l_f",
            calibration::simulate_l_f(
                args.beta,
                args.c0,
                args.n_cal,
                args.t_horizon,
                draws,
                args.seed,
            )?,
        ),
        law => {
            let kind = match law {
                LawArg::NullC => DetectorKind::C,
                LawArg::NullPc => DetectorKind::Pc,
                LawArg::NullFc => DetectorKind::Fc,
                LawArg::NullWc => DetectorKind::Wc,
                LawArg::NullMm => DetectorKind::Mm,
                _ => unreachable!(),
            };
            (
                "null",
                calibration::null_sim_quantiles(
                    kind,
                    args.eta,
                    args.b,
                    args.c0,
                    args.n_cal,
                    args.t_horizon,
                    draws,
                    args.seed,
                )?,
            )
        }
    };
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{label}.json")));
    table.save(&out)?;

    println!(
        "law {}  draws {}  seed {}  -> {}",
        table.law.name(),
        table.draws,
        table.seed,
        out.display()
    );
    if args.law == LawArg::LSn {
        // Percentile layout, one header row and one value row.
        let mut head = String::from("Percentile");
        let mut vals = String::from("Value     ");
        for (p, q) in &table.quantiles {
            head += &format!("{:>9}", format!("{:.0}%", p * 100.0));
            vals += &format!("{q:>9.3}");
        }
        println!("{head}\n{vals}");
    } else {
        for (p, q) in &table.quantiles {
            println!("{:.2}  {q:.4}", p);
        }
    }
    Ok(())
}

fn parse_scale(arg: Option<&str>, detector: DetectorKind) -> twinspect::Result<ScaleMode> {
    let Some(s) = arg else {
        return Ok(match detector {
            DetectorKind::Sntc => ScaleMode::SelfNormalized,
            DetectorKind::Nptc | DetectorKind::Rc => ScaleMode::None,
            _ => ScaleMode::TrainVariance,
        });
    };
    let s = s.to_ascii_lowercase();
    if let Some(v) = s.strip_prefix("known:") {
        let sigma2: f64 = v
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad variance {v:?}")))?;
        return Ok(ScaleMode::Known { sigma2 });
    }
    match s.as_str() {
        "train" => Ok(ScaleMode::TrainVariance),
        "lrv" => Ok(ScaleMode::Lrv { bandwidth: None }),
        "none" => Ok(ScaleMode::None),
        "self" | "self-normalized" => Ok(ScaleMode::SelfNormalized),
        other => {
            if let Some(v) = other.strip_prefix("lrv:") {
                let bw: usize = v
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad bandwidth {v:?}")))?;
                Ok(ScaleMode::Lrv {
                    bandwidth: Some(bw),
                })
            } else {
                Err(Error::InvalidConfig(format!("unknown scale mode {other:?}")))
            }
        }
    }
}

fn cmd_monitor(args: MonitorArgs) -> twinspect::Result<()> {
    let detector = DetectorKind::parse(&args.detector)?;
    let mut cfg = MonitorConfig::new(detector, args.n_train).with_alpha(args.alpha);
    cfg.beta = args.beta;
    cfg.c0 = args.c0;
    cfg.eta = args.eta;
    cfg.b_mosum = args.b;
    cfg.scale = parse_scale(args.scale.as_deref(), detector)?;
    cfg.orlicz_norm = args.orlicz_norm;
    cfg.rc_constant = args.rc_constant;
    cfg.validate()?;

    let table = match &args.table {
        Some(path) => Some(QuantileTable::load_for_config(path, &cfg)?),
        None => None,
    };
    let mut session = MonitorSession::new(&cfg, table.as_ref())?
        .with_trace_stride(if args.trace { 1 } else { 0 });

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let emit = |out: &mut dyn Write, v: serde_json::Value| -> twinspect::Result<()> {
        writeln!(out, "{v}")?;
        Ok(())
    };
    emit(
        &mut out,
        serde_json::json!({
            "event": "config",
            "config": cfg,
            "threshold": table.as_ref().map(|t| t.critical_value(cfg.alpha).ok()),
        }),
    )?;

    let reader: Box<dyn BufRead> = if args.input == "-" {
        Box::new(std::io::stdin().lock())
    } else {
        Box::new(std::io::BufReader::new(std::fs::File::open(&args.input)?))
    };

    let mut malformed = 0usize;
    for line in reader.lines() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let Ok(x) = text.parse::<f64>() else {
            malformed += 1;
            log::warn!("skipping malformed input line {text:?}");
            continue;
        };
        if !x.is_finite() {
            malformed += 1;
            log::warn!("skipping non-finite input value {x}");
            continue;
        }
        if let Some(point) = session.ingest(x)? {
            if args.trace {
                emit(
                    &mut out,
                    serde_json::json!({
                        "event": "step",
                        "k": point.k,
                        "statistic": point.statistic,
                        "threshold": point.threshold,
                    }),
                )?;
            }
        }
        if session.detected() {
            break;
        }
        if let Some(t) = args.horizon {
            if session.steps() >= t {
                break;
            }
        }
    }
    if !session.training_complete() {
        return Err(Error::StreamExhausted {
            needed: cfg.n_train,
            got: 0,
        });
    }

    let report = session.report();
    let v = &report.verdict;
    if v.detected {
        emit(
            &mut out,
            serde_json::json!({
                "event": "alarm",
                "k_hat": v.k_hat,
                "ell_hat": v.ell_hat,
                "change_estimate": v.change_estimate,
                "statistic": v.statistic,
                "threshold": v.threshold,
                "malformed_lines": malformed,
            }),
        )?;
    } else {
        emit(
            &mut out,
            serde_json::json!({
                "event": "none",
                "steps": report.steps,
                "malformed_lines": malformed,
            }),
        )?;
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> twinspect::Result<()> {
    let spec = spec::SpecFile::load(&args.spec)?;
    let store = TableStore::open(&args.tables)?;
    std::fs::create_dir_all(&args.out)?;
    let cells = spec.cells(args.fast, args.seed)?;

    let mut results = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        eprintln!(
            "[{}/{}] {} (reps {})",
            i + 1,
            cells.len(),
            cell.spec.id,
            cell.spec.replications
        );
        match &cell.durations {
            None => results.push(simlab::run_experiment(&cell.spec, &store)?),
            Some(ds) => {
                results.extend(simlab::run_epidemic_experiment(&cell.spec, ds, &store)?)
            }
        }
    }

    let csv_path = args.out.join(format!("{}.csv", spec.id));
    let json_path = args.out.join(format!("{}.json", spec.id));
    simlab::emit_csv(&results, std::fs::File::create(&csv_path)?)?;
    simlab::emit_json(&results, std::fs::File::create(&json_path)?)?;
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> twinspect::Result<()> {
    let records = match (args.synthetic, &args.input) {
        (Some(days), _) => {
            let shift = days / 2;
            let records =
                pipeline::synthetic_demo_records(days, shift, -4.0, 1.0, args.seed);
            if let Some(path) = &args.synthetic_out {
                let mut w = csv::Writer::from_path(path)?;
                w.write_record(["date", "value"])?;
                for r in &records {
                    w.write_record([r.date.to_string(), r.value.to_string()])?;
                }
                w.flush()?;
            }
            records
        }
        (None, Some(path)) => {
            let schema = CsvSchema {
                date_col: args.date_col.clone(),
                value_col: args.value_col.clone(),
                date_format: args.date_format.clone(),
            };
            let ingest = pipeline::ingest_csv(std::fs::File::open(path)?, &schema)?;
            for msg in &ingest.skip_log {
                log::warn!("{msg}");
            }
            if ingest.skipped > 0 {
                eprintln!("skipped {} invalid rows", ingest.skipped);
            }
            ingest.records
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "provide --input or --synthetic".into(),
            ))
        }
    };
    let series = pipeline::aggregate_daily(&records)?;

    let detectors = match &args.detectors {
        None => DetectorKind::ALL.to_vec(),
        Some(list) => list
            .split(',')
            .map(|s| DetectorKind::parse(s.trim()))
            .collect::<twinspect::Result<_>>()?,
    };
    let scale = match args.scale.as_str() {
        "monitoring" => PipelineScale::MonitoringVariance,
        "training" => PipelineScale::TrainVariance,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown scale {other:?} (monitoring | training)"
            )))
        }
    };
    let opts = AnalyzeOptions {
        training_len: args.training_days,
        alpha: args.alpha,
        detectors,
        scale,
        trace_stride: 1,
    };
    let store = TableStore::open(&args.tables)?;
    let report = pipeline::analyze(&series, &opts, &store)?;

    if let Some(dir) = &args.trace_dir {
        std::fs::create_dir_all(dir)?;
        for d in &report.detectors {
            let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", d.detector)))?;
            w.write_record(["k", "statistic", "threshold"])?;
            for p in &d.trace {
                w.write_record([
                    p.k.to_string(),
                    p.statistic.to_string(),
                    p.threshold.to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    // Traces go to their own files; keep the JSON report lean.
    let mut doc = serde_json::to_value(&report)?;
    for d in doc["detectors"].as_array_mut().unwrap() {
        d.as_object_mut().unwrap().remove("trace");
    }
    let text = serde_json::to_string_pretty(&doc)?;
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_tables(args: TablesArgs) -> twinspect::Result<()> {
    let dir: &Path = &args.dir;
    let store = TableStore::open(dir)?;
    if store.tables().is_empty() {
        println!("no tables in {}", dir.display());
        return Ok(());
    }
    println!(
        "{:<14} {:>8} {:>12} {:>9} {:>9}  fingerprint",
        "law", "draws", "seed", "q95", "q99"
    );
    for t in store.tables() {
        println!(
            "{:<14} {:>8} {:>12} {:>9.4} {:>9.4}  {}",
            t.law.name(),
            t.draws,
            t.seed,
            t.quantile(0.95).unwrap_or(f64::NAN),
            t.quantile(0.99).unwrap_or(f64::NAN),
            t.fingerprint
        );
    }
    Ok(())
}
