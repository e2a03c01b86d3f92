use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use evrot::bench::{bench, estimate_batches, write_bench_csv, write_estimates_csv, write_trajectory_csv, Batching, EstimateConfig, Method, DEFAULT_SIZES};
use evrot::camera::CameraIntrinsics;
use evrot::error::{Error, Result};
use evrot::io::{read_calibration, read_events, read_trajectory, write_calibration, write_events, write_trajectory, Trajectory};
use evrot::metrics::absolute_orientation_error;
use evrot::so3::AngularVelocity;
use evrot::synth::{generate_stream, MotionScript, NoiseModel, SceneModel};
use evrot::vo::{vo_run, VoConfig};

/// Camera rotation from event streams.
#[derive(Parser)]
#[command(name = "evrot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Str,
    Cm,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Str => Method::Str,
            MethodArg::Cm => Method::Cm,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Constant angular velocity.
    Const,
    /// Piecewise-constant velocity changing every few seconds.
    Script,
}

#[derive(Subcommand)]
enum Command {
    /// Per-batch angular velocity over consecutive non-overlapping batches.
    Estimate {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long, value_enum, default_value = "str")]
        method: MethodArg,
        #[arg(long, default_value_t = 20_000)]
        batch_size: usize,
        /// Cut batches by duration (ms) instead of event count.
        #[arg(long)]
        batch_duration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Odometry over overlapping batches with rotation averaging.
    Vo {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        /// Ground truth; adds a per-pose error column and prints the mean.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Emit the chained trajectory instead of the averaged one.
        #[arg(long)]
        no_averaging: bool,
        #[arg(long, default_value_t = 30_000)]
        batch_size: usize,
        #[arg(long, default_value_t = 2_000)]
        key_threshold: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes a synthetic stream, its ground truth and calibration.
    Synth {
        #[arg(long, value_enum, default_value = "const")]
        preset: Preset,
        #[arg(long)]
        out_dir: PathBuf,
        /// Seconds.
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        /// Events per second.
        #[arg(long, default_value_t = 100_000.0)]
        rate: f64,
        /// Pixel noise standard deviation.
        #[arg(long, default_value_t = 0.0)]
        noise_px: f64,
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
        /// Timestamp jitter (s).
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        /// Constant-preset velocity `wx,wy,wz` (rad/s).
        #[arg(long, value_parser = parse_omega, default_value = "0.1,-0.15,0.08")]
        omega: AngularVelocity,
        #[arg(long, default_value_t = 240)]
        width: u32,
        #[arg(long, default_value_t = 180)]
        height: u32,
        #[arg(long, default_value_t = 4000)]
        landmarks: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// RMS error and runtime per batch size and method.
    Bench {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIZES)]
        batch_sizes: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["str", "cm"])]
        methods: Vec<MethodArg>,
        /// Sequence name for the report; defaults to the events file stem.
        #[arg(long)]
        sequence: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_omega(s: &str) -> std::result::Result<AngularVelocity, String> {
    let v: Vec<f64> = s.split(',').map(|c| c.trim().parse::<f64>().map_err(|e| format!("'{c}': {e}"))).collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x, y, z] => Ok(AngularVelocity::new(x, y, z)),
        _ => Err(format!("expected wx,wy,wz, found {} values", v.len())),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Estimate { events, calib, method, batch_size, batch_duration, out } => {
            let intr = read_calibration(&calib)?;
            let events = read_events(&events)?;
            let batching = match batch_duration {
                Some(ms) => Batching::Duration(ms * 1e-3),
                None => Batching::Count(batch_size),
            };
            let rows = estimate_batches(&events, &intr, method.into(), batching, &EstimateConfig::default())?;
            write_estimates_csv(create(&out)?, method.into(), &rows)
        }
        Command::Vo { events, calib, gt, no_averaging, batch_size, key_threshold, out } => {
            let intr = read_calibration(&calib)?;
            let events = read_events(&events)?;
            let cfg = VoConfig { batch_size, key_threshold, ..VoConfig::default() };
            let result = vo_run(&events, &intr, &cfg)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            let trajectory = if no_averaging { &result.chained } else { &result.averaged };
            match gt {
                Some(gt) => {
                    let gt = Trajectory::new(read_trajectory(&gt)?)?;
                    let inside: Vec<_> = trajectory.iter().filter(|r| gt.contains(r.t)).copied().collect();
                    let err = absolute_orientation_error(&inside, &gt)?;
                    write_trajectory_csv(create(&out)?, &inside, Some(&err.errors))?;
                    println!("mean absolute orientation error: {:.4} deg over {} poses", err.mean, err.errors.len());
                    Ok(())
                }
                None => write_trajectory_csv(create(&out)?, trajectory, None),
            }
        }
        Command::Synth {
            preset, out_dir, duration, rate, noise_px, outliers, jitter, omega, width, height, landmarks, seed,
        } => {
            let intr = CameraIntrinsics::from_fov(width, height, 1.2)?;
            let script = match preset {
                Preset::Const => MotionScript::constant(omega, duration)?,
                Preset::Script => MotionScript::tour(duration, 5.0, 0.2)?,
            };
            let noise = NoiseModel { pixel_sigma: noise_px, jitter, outlier_fraction: outliers, quantize: false };
            let scene = SceneModel::random(landmarks, std::f64::consts::PI, seed);
            let stream = generate_stream(&scene, &script, &intr, rate, &noise, seed)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            write_events(out_dir.join("events.txt"), &stream.events)?;
            write_trajectory(out_dir.join("groundtruth.txt"), &stream.trajectory)?;
            write_calibration(out_dir.join("calib.txt"), &intr)?;
            println!("wrote {} events to {}", stream.events.len(), out_dir.display());
            Ok(())
        }
        Command::Bench { events, calib, gt, batch_sizes, methods, sequence, out } => {
            let intr = read_calibration(&calib)?;
            let name = sequence.unwrap_or_else(|| {
                events.file_stem().map_or_else(|| "sequence".into(), |s| s.to_string_lossy().into_owned())
            });
            let events = read_events(&events)?;
            let gt = Trajectory::new(read_trajectory(&gt)?)?;
            let methods: Vec<Method> = methods.into_iter().map(Method::from).collect();
            let rows = bench(&name, &events, &intr, &gt, &batch_sizes, &methods, &EstimateConfig::default())?;
            write_bench_csv(create(&out)?, &rows)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error: category=usage {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: category={} {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
