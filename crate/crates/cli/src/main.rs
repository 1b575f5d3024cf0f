use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use slam2d::evaluation::{compare, consistency, rmse, RunLog};
use slam2d::filter::ObservationMode;
use slam2d::ingest::{parse_log, write_log, ParseError, SensorLog};
use slam2d::pipeline::{
    read_map, run_pipeline, write_map, Estimator, MapEntry, PipelineConfig, PipelineOutput,
};
use slam2d::simulator::{simulate, GroundTruth, ScenarioConfig};

#[derive(Parser)]
#[command(name = "slam2d", version, about = "2D EKF-SLAM simulation, log replay and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write `log.txt` and `truth.txt`.
    Simulate(SimulateArgs),
    /// Replay a log, or freshly simulated scenarios, through an estimator.
    Run(Box<RunArgs>),
    /// Tabulate error metrics of several `run.csv` files.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML scenario; the built-in loop scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

impl Toggle {
    fn on(self) -> bool {
        self == Toggle::On
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObsMode {
    Range,
    Bearing,
    Both,
}

impl From<ObsMode> for ObservationMode {
    fn from(m: ObsMode) -> Self {
        match m {
            ObsMode::Range => ObservationMode::RangeOnly,
            ObsMode::Bearing => ObservationMode::BearingOnly,
            ObsMode::Both => ObservationMode::RangeBearing,
        }
    }
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["log", "scenario"])))]
struct RunArgs {
    /// Sensor log to replay.
    log: Option<PathBuf>,
    /// Simulate this TOML scenario instead of reading a log.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Ground truth for error metrics.
    #[arg(long, requires = "log")]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "ekf_slam",
          value_parser = PossibleValuesParser::new(["dead_reckoning", "ekf_localisation", "ekf_slam"]))]
    estimator: String,
    #[arg(long, value_enum, default_value = "both")]
    obs_mode: ObsMode,
    #[arg(long, value_enum, default_value = "on")]
    prefilter: Toggle,
    #[arg(long, value_enum, default_value = "on")]
    quality: Toggle,
    /// First scenario seed; later runs of a batch count up from it.
    #[arg(long, requires = "scenario")]
    seed: Option<u64>,
    /// Association gate in metres.
    #[arg(long, default_value_t = 0.3)]
    d_max: f64,
    /// Range jump that splits scan segments, in metres.
    #[arg(long, default_value_t = 0.25)]
    gap: f64,
    /// Segments must have more beams than this.
    #[arg(long, default_value_t = 3)]
    size_min: usize,
    /// Segments must have fewer beams than this.
    #[arg(long, default_value_t = 8)]
    size_max: usize,
    /// Minimum spacing kept by the pre-filter, in metres.
    #[arg(long, default_value_t = 2.0)]
    min_separation: f64,
    /// Quality score above which a candidate is registered.
    #[arg(long, default_value_t = 10, allow_negative_numbers = true)]
    set_thresh: i64,
    /// Quality score below which a candidate is dropped.
    #[arg(long, default_value_t = -20, allow_negative_numbers = true)]
    clear_thresh: i64,
    /// Longest stationary prefix used for bias estimation, in seconds.
    #[arg(long, default_value_t = 5.0)]
    bias_window: f64,
    /// Known landmark map (`M id x y` lines); a truth file also works.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Speed noise, m/s.
    #[arg(long)]
    sigma_v: Option<f64>,
    /// Yaw-rate noise, rad/s.
    #[arg(long)]
    sigma_omega: Option<f64>,
    /// Range noise, m.
    #[arg(long)]
    sigma_range: Option<f64>,
    /// Bearing noise, rad.
    #[arg(long)]
    sigma_bearing: Option<f64>,
    /// Directory for run.csv, landmark_traces.csv and final_map.txt.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Number of seeded scenario runs, executed in parallel.
    #[arg(long, default_value_t = 1, requires = "scenario",
          value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
}

#[derive(Args)]
struct CompareArgs {
    /// `run.csv` files or directories holding one.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Row labels, in order; defaults to directory names.
    #[arg(long = "label")]
    labels: Vec<String>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Data(String),
}

type Outcome = Result<(), Failure>;

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn located(path: &Path, e: ParseError) -> Failure {
    match e {
        ParseError::Malformed { line, message } => {
            Failure::Data(format!("{}:{line}: {message}", path.display()))
        }
        ParseError::Io(e) => Failure::Data(format!("{}: {e}", path.display())),
    }
}

fn ensure_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))
}

fn load_scenario(path: Option<&Path>) -> Result<ScenarioConfig, Failure> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            ScenarioConfig::from_toml(&text).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))
        }
    }
}

fn cmd_simulate(args: SimulateArgs) -> Outcome {
    let mut cfg = load_scenario(args.scenario.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let (truth, log) = simulate(&cfg).map_err(data)?;
    ensure_dir(&args.out)?;
    let log_path = args.out.join("log.txt");
    let truth_path = args.out.join("truth.txt");
    let mut w = create(&log_path)?;
    write_log(&log, &mut w).and_then(|_| w.flush()).map_err(data)?;
    let mut w = create(&truth_path)?;
    truth.write(&mut w).and_then(|_| w.flush()).map_err(data)?;
    println!("seed {}", cfg.seed);
    println!("log {}", log_path.display());
    println!("truth {}", truth_path.display());
    Ok(())
}

fn pipeline_config(args: &RunArgs) -> Result<PipelineConfig, Failure> {
    let estimator: Estimator = args.estimator.parse().map_err(Failure::Usage)?;
    if args.size_min >= args.size_max {
        return Err(Failure::Usage("--size-min must be below --size-max".into()));
    }
    if args.set_thresh <= args.clear_thresh {
        return Err(Failure::Usage("--set-thresh must exceed --clear-thresh".into()));
    }
    for (name, v) in [
        ("--d-max", args.d_max),
        ("--gap", args.gap),
        ("--bias-window", args.bias_window),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Failure::Usage(format!("{name} must be positive")));
        }
    }
    if !(args.min_separation.is_finite() && args.min_separation >= 0.0) {
        return Err(Failure::Usage("--min-separation must be non-negative".into()));
    }
    let mut cfg = PipelineConfig {
        estimator,
        observation_mode: args.obs_mode.into(),
        bias_window: args.bias_window,
        ..PipelineConfig::default()
    };
    let p = &mut cfg.perception;
    p.gap = args.gap;
    p.d_max = args.d_max;
    p.extraction.min_points = args.size_min;
    p.extraction.max_points = args.size_max;
    p.prefilter = args.prefilter.on();
    p.min_separation = args.min_separation;
    p.quality = args.quality.on();
    p.quality_params.set_threshold = args.set_thresh;
    p.quality_params.clear_threshold = args.clear_thresh;
    Ok(cfg)
}

/// Noise flags override whatever the run would otherwise assume.
fn apply_noise_flags(cfg: &mut PipelineConfig, args: &RunArgs) -> Outcome {
    let check = |name: &str, v: f64| {
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(Failure::Usage(format!("{name} must be non-negative")))
        }
    };
    if let Some(v) = args.sigma_v {
        cfg.motion_noise.sigma_v = check("--sigma-v", v)?;
    }
    if let Some(v) = args.sigma_omega {
        cfg.motion_noise.sigma_omega = check("--sigma-omega", v)?;
    }
    if let Some(v) = args.sigma_range {
        let v = check("--sigma-range", v)?;
        cfg.landmark_noise.sigma_range = v;
        cfg.scan_noise.sigma_range = v;
    }
    if let Some(v) = args.sigma_bearing {
        let v = check("--sigma-bearing", v)?;
        cfg.landmark_noise.sigma_bearing = v;
        cfg.scan_noise.sigma_bearing = v;
    }
    Ok(())
}

fn write_outputs(dir: &Path, out: &PipelineOutput, estimator: Estimator) -> Outcome {
    ensure_dir(dir)?;
    let mut w = create(&dir.join("run.csv"))?;
    out.run.write_csv(&mut w).map_err(data)?;
    let mut w = create(&dir.join("landmark_traces.csv"))?;
    out.run.write_landmark_traces(&mut w).map_err(data)?;
    if estimator == Estimator::EkfSlam {
        let mut w = create(&dir.join("final_map.txt"))?;
        write_map(&out.final_map, &mut w).and_then(|_| w.flush()).map_err(data)?;
    }
    Ok(())
}

fn summarise(label: &str, out: &PipelineOutput) {
    let last = out.run.steps.last();
    print!(
        "{label}: {} steps, {} landmarks",
        out.run.steps.len(),
        last.map_or(0, |s| s.landmark_count)
    );
    if let Ok(e) = rmse(&out.run) {
        print!(", rmse x {:.4} m y {:.4} m theta {:.4} deg", e.x, e.y, e.theta);
    }
    if out.skipped_updates > 0 {
        print!(", {} updates skipped", out.skipped_updates);
    }
    println!();
}

fn true_map(truth: &GroundTruth) -> Vec<MapEntry> {
    truth
        .landmarks
        .iter()
        .enumerate()
        .map(|(i, &position)| MapEntry {
            id: i as u64,
            position,
            covariance: None,
        })
        .collect()
}

struct BatchRow {
    seed: u64,
    rmse: [f64; 3],
    within: [f64; 2],
    map_size: usize,
}

fn cmd_run(args: RunArgs) -> Outcome {
    let mut cfg = pipeline_config(&args)?;
    let file_map = match &args.map {
        Some(p) => Some(read_map(open(p)?).map_err(|e| located(p, e))?),
        None => None,
    };

    let Some(scenario_path) = &args.scenario else {
        let log_path = args.log.as_deref().expect("clap enforces an input");
        if cfg.estimator == Estimator::EkfLocalisation && file_map.is_none() {
            return Err(Failure::Usage("ekf_localisation needs --map".into()));
        }
        apply_noise_flags(&mut cfg, &args)?;
        let log: SensorLog = parse_log(open(log_path)?).map_err(|e| located(log_path, e))?;
        let truth = match &args.truth {
            Some(p) => Some(GroundTruth::parse(open(p)?).map_err(|e| located(p, e))?),
            None => None,
        };
        let out = run_pipeline(&log, &cfg, file_map.as_deref(), truth.as_ref()).map_err(data)?;
        write_outputs(&args.out, &out, cfg.estimator)?;
        summarise(cfg.estimator.name(), &out);
        return Ok(());
    };

    let mut scenario = load_scenario(Some(scenario_path))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    cfg.motion_noise = scenario.motion_noise;
    cfg.landmark_noise = scenario.sensor_noise;
    apply_noise_flags(&mut cfg, &args)?;
    let first = scenario.seed;
    let one = |seed: u64| -> Result<(u64, PipelineOutput), Failure> {
        let (truth, log) = simulate(&scenario.clone().with_seed(seed)).map_err(data)?;
        let map = file_map.clone().unwrap_or_else(|| true_map(&truth));
        let out = run_pipeline(&log, &cfg, Some(&map), Some(&truth)).map_err(data)?;
        Ok((seed, out))
    };

    if args.runs == 1 {
        let (_, out) = one(first)?;
        write_outputs(&args.out, &out, cfg.estimator)?;
        summarise(&format!("{} seed {first}", cfg.estimator), &out);
        return Ok(());
    }

    let rows: Vec<BatchRow> = (first..first + args.runs)
        .into_par_iter()
        .map(|seed| {
            let (seed, out) = one(seed)?;
            let e = rmse(&out.run).map_err(data)?;
            let c = consistency(&out.run).map_err(data)?;
            Ok(BatchRow {
                seed,
                rmse: [e.x, e.y, e.theta],
                within: [c.x, c.y],
                map_size: out.run.steps.last().map_or(0, |s| s.landmark_count),
            })
        })
        .collect::<Result<_, Failure>>()?;
    ensure_dir(&args.out)?;
    let path = args.out.join("batch.csv");
    let mut w = create(&path)?;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "seed,rmse_x_m,rmse_y_m,rmse_theta_deg,within_3sigma_x,within_3sigma_y,final_map_size")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.seed, r.rmse[0], r.rmse[1], r.rmse[2], r.within[0], r.within[1], r.map_size
            )?;
        }
        w.flush()
    };
    write(&mut w).map_err(data)?;
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&BatchRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    println!(
        "{} over {} seeds: mean rmse x {:.4} m y {:.4} m theta {:.4} deg, within 3 sigma x {:.3} y {:.3}",
        cfg.estimator,
        rows.len(),
        mean(&|r| r.rmse[0]),
        mean(&|r| r.rmse[1]),
        mean(&|r| r.rmse[2]),
        mean(&|r| r.within[0]),
        mean(&|r| r.within[1]),
    );
    println!("batch {}", path.display());
    Ok(())
}

fn label_for(path: &Path) -> String {
    let named = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned());
    if path.is_dir() {
        return named(path).unwrap_or_else(|| path.display().to_string());
    }
    if path.file_name().is_some_and(|n| n == "run.csv") {
        if let Some(dir) = path.parent().and_then(named) {
            return dir;
        }
    }
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_compare(args: CompareArgs) -> Outcome {
    if !args.labels.is_empty() && args.labels.len() != args.runs.len() {
        return Err(Failure::Usage(format!(
            "{} labels for {} runs",
            args.labels.len(),
            args.runs.len()
        )));
    }
    let mut runs = Vec::with_capacity(args.runs.len());
    for path in &args.runs {
        let file = if path.is_dir() { path.join("run.csv") } else { path.clone() };
        let run = RunLog::read_csv(open(&file)?).map_err(|e| Failure::Data(format!("{}: {e}", file.display())))?;
        runs.push(run);
    }
    let labels = if args.labels.is_empty() {
        args.runs.iter().map(|p| label_for(p)).collect()
    } else {
        args.labels
    };
    let report = compare(&runs, &labels).map_err(data)?;
    print!("{}", report.to_text());
    ensure_dir(&args.out)?;
    let path = args.out.join("comparison.csv");
    let mut w = create(&path)?;
    report.write_csv(&mut w).map_err(data)?;
    w.flush().map_err(data)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Run(a) => cmd_run(*a),
        Command::Compare(a) => cmd_compare(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
