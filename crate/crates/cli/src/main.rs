use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trdyn::dynamics::{IntegrationOrder, RolloutMode};
use trdyn::field::Parametrization;
use trdyn::optim::Supervision;
use trdyn::pipeline::{self, Backend, RunConfig};
use trdyn::{Error, ErrorKind};

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "TRDYN_THREADS";

#[derive(Parser, Debug)]
#[command(name = "trdyn", version, about = "Fit, extrapolate, segment and render rigid-particle dynamics")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct FitArgs {
    #[arg(long)]
    iterations: Option<usize>,
    /// Integration order of the fitted field (1, 2 or 3).
    #[arg(long, value_parser = parse_order)]
    order: Option<IntegrationOrder>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    dt_multiple: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<RolloutMode>,
    #[arg(long, value_parser = parse_parametrization)]
    parametrization: Option<Parametrization>,
    #[arg(long, value_parser = parse_supervision)]
    supervision: Option<Supervision>,
    #[arg(long, value_parser = parse_backend)]
    backend: Option<Backend>,
}

#[derive(Args, Debug, Default)]
struct RolloutArgs {
    /// Extrapolated steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Step length in seconds (a whole number of frames).
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "rollout-mode", value_parser = parse_mode)]
    rollout_mode: Option<RolloutMode>,
    #[arg(long = "rollout-order", value_parser = parse_order)]
    rollout_order: Option<IntegrationOrder>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic scene to <output>/dataset.
    Generate {
        /// Preset scene name.
        #[arg(long)]
        scene: Option<String>,
    },
    /// Fit a dynamics field to the training frames.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Extrapolate from the last training frame and score the prediction.
    Extrapolate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        rollout: RolloutArgs,
    },
    /// Cluster particles by their fitted motion.
    Segment {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Cluster count; omitted runs a silhouette sweep.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        standardize: bool,
        #[arg(long)]
        query_time: Option<f64>,
    },
    /// Render a dataset or a predicted trajectory to PNG frames.
    Render {
        #[arg(long)]
        dataset: PathBuf,
        /// Trajectory CSV over the dataset's particles.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
    },
    /// Fit growing time windows with warm starts.
    Continual {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Fit and score every ablation cell.
    Ablate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Generate, fit, extrapolate, segment and render in one go.
    Run {
        #[arg(long)]
        scene: Option<String>,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        rollout: RolloutArgs,
        #[arg(long)]
        k: Option<usize>,
    },
}

fn parse_order(s: &str) -> Result<IntegrationOrder, String> {
    let n: u8 = s.parse().map_err(|_| format!("expected 1, 2 or 3, got {s:?}"))?;
    IntegrationOrder::try_from(n).map_err(|e| e.to_string())
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<RolloutMode, String> {
    parse_enum(s)
}

fn parse_parametrization(s: &str) -> Result<Parametrization, String> {
    parse_enum(s)
}

fn parse_supervision(s: &str) -> Result<Supervision, String> {
    parse_enum(s)
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    parse_enum(s)
}

impl FitArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let f = &mut cfg.fit;
        if let Some(v) = self.iterations {
            f.iterations = v;
        }
        if let Some(v) = self.order {
            f.order = v;
        }
        if let Some(v) = self.learning_rate {
            f.learning_rate = Some(v);
        }
        if let Some(v) = self.dt_multiple {
            f.dt_multiple = v;
        }
        if let Some(v) = self.batch_size {
            f.batch_size = v;
        }
        if let Some(v) = self.mode {
            f.mode = v;
        }
        if let Some(v) = self.parametrization {
            f.parametrization = v;
        }
        if let Some(v) = self.supervision {
            f.supervision = v;
        }
        if let Some(v) = self.backend {
            cfg.field.backend = v;
        }
    }
}

impl RolloutArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        let r = &mut cfg.rollout;
        if let Some(v) = self.steps {
            r.n_steps = v;
        }
        if self.dt.is_some() {
            r.dt = self.dt;
        }
        if self.rollout_mode.is_some() {
            r.mode = self.rollout_mode;
        }
        if self.rollout_order.is_some() {
            r.order = self.rollout_order;
        }
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    if n == 0 {
        return Err(Error::InvalidConfig(format!("{THREADS_ENV} must be positive")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::default(),
    };
    if let Some(o) = cli.output {
        cfg.output = o;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::Generate { scene } => {
            if let Some(s) = scene {
                cfg.scene = pipeline::SceneChoice::Preset(s);
            }
            let cfg = cfg.normalized();
            let dir = pipeline::cmd_generate(&cfg)?;
            println!("dataset written to {}", dir.display());
        }
        Command::Fit { dataset, fit } => {
            fit.apply(&mut cfg);
            let cfg = cfg.normalized();
            let (_, summary) = pipeline::cmd_fit(&dataset, &cfg)?;
            println!(
                "fitted {} weights on {} samples over {} iterations, final loss {:.4e}",
                summary.n_weights,
                summary.n_samples,
                summary.iterations,
                summary.final_loss.unwrap_or(f64::NAN)
            );
            println!("checkpoint {}", cfg.output.join("field.json").display());
        }
        Command::Extrapolate { dataset, checkpoint, rollout } => {
            rollout.apply(&mut cfg);
            let report = pipeline::cmd_extrapolate(&dataset, &checkpoint, &cfg.normalized())?;
            print!("{}", report.summary());
        }
        Command::Segment { checkpoint, dataset, k, standardize, query_time } => {
            if k.is_some() {
                cfg.segmentation.k = k;
            }
            cfg.segmentation.standardize |= standardize;
            if query_time.is_some() {
                cfg.segmentation.query_time = query_time;
            }
            let r = pipeline::cmd_segment(&checkpoint, &dataset, &cfg.normalized())?;
            println!(
                "k {} accuracy {:.4} mIoU {:.4} rand index {:.4}",
                r.k, r.metrics.accuracy, r.metrics.miou, r.metrics.rand_index
            );
        }
        Command::Render { dataset, trajectory, camera, width, height } => {
            if let Some(w) = width {
                cfg.render.width = w;
            }
            if let Some(h) = height {
                cfg.render.height = h;
            }
            let cfg = cfg.normalized();
            let paths = pipeline::cmd_render(&dataset, trajectory.as_deref(), camera.as_deref(), &cfg)?;
            println!("{} frames written to {}", paths.len(), cfg.output.join("frames").display());
        }
        Command::Continual { dataset, fit } => {
            fit.apply(&mut cfg);
            let r = pipeline::cmd_continual(&dataset, &cfg.normalized())?;
            println!("{:>10} {:>7} {:>12} {:>9}", "window_end", "frames", "final_rmse", "rel");
            for w in &r.windows {
                println!("{:>10.4} {:>7} {:>12.4e} {:>8.3}%", w.window_end, w.train_frames, w.final_rmse, 100.0 * w.relative_final_rmse);
            }
            println!("worst/best {:.3}", r.worst_to_best);
        }
        Command::Ablate { dataset, iterations } => {
            if let Some(n) = iterations {
                cfg.fit.iterations = n;
            }
            let r = pipeline::cmd_ablate(&dataset, &cfg.normalized())?;
            print!("{}", r.summary());
        }
        Command::Run { scene, fit, rollout, k } => {
            if let Some(s) = scene {
                cfg.scene = pipeline::SceneChoice::Preset(s);
            }
            fit.apply(&mut cfg);
            rollout.apply(&mut cfg);
            if k.is_some() {
                cfg.segmentation.k = k;
            }
            let report = pipeline::cmd_run(&cfg.normalized())?;
            print!("{}", report.summary());
            if let Some(m) = report.segmentation {
                println!("segmentation accuracy {:.4} mIoU {:.4} rand index {:.4}", m.accuracy, m.miou, m.rand_index);
            }
        }
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Config => "config",
        ErrorKind::Data => "data",
        ErrorKind::Numerical => "numerical",
    }
}

/// One JSON object on one line.
fn report_error(kind: &str, message: &str) {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let message: Vec<&str> = text
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            report_error("config", message.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            report_error(kind_name(kind), &e.to_string());
            ExitCode::from(exit_code(kind))
        }
    }
}
