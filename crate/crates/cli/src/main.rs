use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use lcnn_core::complexity::profile_network;
use lcnn_core::eval::{
    bench_fps, false_positive_rate, parse_ground_truth, Clock, SteppingClock, SystemClock,
    DEFAULT_BENCH_SECONDS, DEFAULT_IOU_MIN,
};
use lcnn_core::media::prepare_frame;
use lcnn_core::nn::Tensor;
use lcnn_core::weights::{random_init, zero_init};
use lcnn_core::{
    build_lcnn_default, load_weights, save_weights, validate_config, Detection, Detector, HeadSpec,
    NetworkConfig, WeightStore,
};

#[derive(Debug, Parser)]
#[command(name = "lcnn", version, about = "Lightweight CNN person detector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run detection over every frame in a directory and write JSON lines.
    Detect(DetectArgs),
    /// Measure sustained and peak frames per second.
    Bench(BenchArgs),
    /// Print per-layer multiply-accumulate and parameter counts.
    Analyze(AnalyzeArgs),
    /// Write a deterministic He-initialised weight file.
    Init(InitArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// LCNW weight file.
    #[arg(long)]
    weights: PathBuf,
    /// Network config JSON; the built-in schedule when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Layers whose outputs feed detection heads, e.g. 11,13,15,17.
    #[arg(long, value_delimiter = ',')]
    taps: Option<Vec<usize>>,
    /// One default-box scale per tap, increasing.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f32>>,
    /// Minimum class probability.
    #[arg(long)]
    threshold: Option<f32>,
    #[arg(long)]
    nms_iou: Option<f32>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Report every non-background class instead of persons only.
    #[arg(long)]
    all_classes: bool,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Directory of .ppm/.pgm/.pnm frames, processed in file-name order.
    #[arg(long)]
    frames: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth file; prints the false-positive rate to stderr.
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_IOU_MIN)]
    iou_min: f32,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    frames: PathBuf,
    /// Seconds to run.
    #[arg(long, default_value_t = DEFAULT_BENCH_SECONDS)]
    duration: f64,
    /// Charge every frame exactly this many milliseconds instead of reading
    /// the system clock. Makes the report reproducible.
    #[arg(long)]
    fake_frame_ms: Option<u64>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InitArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    taps: Option<Vec<usize>>,
    /// All-zero weights; the detector then reports nothing.
    #[arg(long)]
    zero: bool,
}

/// An error plus the exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            message: format!("{context}: {err}"),
        }
    }

    fn internal(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        Failure {
            code: 1,
            message: format!("{context}: {err}"),
        }
    }
}

impl From<lcnn_core::Error> for Failure {
    fn from(err: lcnn_core::Error) -> Self {
        Failure {
            code: 2,
            message: err.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Detect(a) => run_detect(a),
        Command::Bench(a) => run_bench(a),
        Command::Analyze(a) => run_analyze(a),
        Command::Init(a) => run_init(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lcnn: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: Option<&Path>, taps: Option<&[usize]>) -> Result<NetworkConfig, Failure> {
    let mut config = match path {
        Some(p) => NetworkConfig::from_path(p).map_err(|e| Failure::input(p.display(), e))?,
        None => build_lcnn_default(),
    };
    if let Some(taps) = taps {
        config.tap_indices = taps.iter().copied().collect();
    }
    validate_config(&config)?;
    Ok(config)
}

fn head_for(config: &NetworkConfig, m: &ModelArgs) -> Result<HeadSpec, Failure> {
    let mut head = HeadSpec::for_config(config);
    if let Some(s) = &m.scales {
        head.scales = s.clone();
    }
    if let Some(t) = m.threshold {
        head.confidence_threshold = t;
    }
    if let Some(t) = m.nms_iou {
        head.nms_iou_threshold = t;
    }
    if let Some(k) = m.top_k {
        head.top_k = k;
    }
    head.all_classes = m.all_classes;
    head.validate_for(config)?;
    Ok(head)
}

fn load_model(m: &ModelArgs) -> Result<(NetworkConfig, HeadSpec, WeightStore), Failure> {
    let config = load_config(m.config.as_deref(), m.taps.as_deref())?;
    let head = head_for(&config, m)?;
    let store = load_weights(&m.weights).map_err(|e| Failure::input(m.weights.display(), e))?;
    Ok((config, head, store))
}

fn is_frame(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| ["ppm", "pgm", "pnm"].contains(&e.to_ascii_lowercase().as_str()))
}

/// Frame files in `dir`, sorted by file name, paired with their names.
fn list_frames(dir: &Path) -> Result<Vec<(String, PathBuf)>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::input(dir.display(), e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Failure::input(dir.display(), e))?.path();
        if is_frame(&path) {
            let name = path
                .file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            frames.push((name, path));
        }
    }
    if frames.is_empty() {
        return Err(Failure::input(
            dir.display(),
            "no .ppm/.pgm/.pnm frames found",
        ));
    }
    frames.sort();
    Ok(frames)
}

fn load_frame(path: &Path, size: usize) -> Result<Tensor, Failure> {
    prepare_frame(path, size).map_err(|e| Failure::input(path.display(), e))
}

fn json_line(out: &mut String, frame: &str, d: &Detection) {
    let b = d.bbox;
    let _ = writeln!(
        out,
        "{{\"frame\":{},\"class\":{},\"score\":{:.6},\"xmin\":{:.6},\"ymin\":{:.6},\"xmax\":{:.6},\"ymax\":{:.6}}}",
        serde_json::Value::from(frame),
        d.class_id,
        d.score,
        b.xmin,
        b.ymin,
        b.xmax,
        b.ymax
    );
}

fn write_output(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::internal(p.display(), e)),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::internal("stdout", e)),
    }
}

fn run_detect(args: DetectArgs) -> CmdResult {
    let (config, head, store) = load_model(&args.model)?;
    let detector = Detector::new(&config, &store, &head)
        .map_err(|e| Failure::input(args.model.weights.display(), e))?;
    let truth = match &args.ground_truth {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::input(p.display(), e))?;
            Some(parse_ground_truth(&text).map_err(|e| Failure::input(p.display(), e))?)
        }
        None => None,
    };
    let mut out = String::new();
    let mut per_frame = Vec::new();
    for (name, path) in list_frames(&args.frames)? {
        let frame = load_frame(&path, config.input_size)?;
        let dets = detector.detect(&frame)?;
        for d in &dets {
            json_line(&mut out, &name, d);
        }
        per_frame.push((name, dets));
    }
    write_output(args.out.as_deref(), &out)?;
    if let Some(truth) = truth {
        let report = false_positive_rate(&per_frame, &truth, args.iou_min)?;
        eprintln!(
            "detections={} matched={} false_positives={} fpr={:.3}%",
            report.total_detections, report.matched, report.false_positives, report.percent
        );
    }
    Ok(())
}

fn run_bench(args: BenchArgs) -> CmdResult {
    if !(args.duration.is_finite() && args.duration > 0.0) {
        return Err(Failure::input(
            "--duration",
            "must be a positive number of seconds",
        ));
    }
    let (config, head, store) = load_model(&args.model)?;
    let frames = list_frames(&args.frames)?
        .iter()
        .map(|(_, p)| load_frame(p, config.input_size))
        .collect::<Result<Vec<_>, _>>()?;
    let duration = Duration::from_secs_f64(args.duration);
    let clock: Box<dyn Clock> = match args.fake_frame_ms {
        Some(0) => return Err(Failure::input("--fake-frame-ms", "must be at least 1")),
        Some(ms) => Box::new(SteppingClock::new(Duration::from_millis(ms))),
        None => Box::new(SystemClock::new()),
    };
    let report = bench_fps(&config, &store, &head, &frames, duration, clock.as_ref())?;
    write_output(None, &report.to_csv())
}

fn analysis_table(config: &NetworkConfig) -> Result<String, Failure> {
    let profile = profile_network(config)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>5} {:<12} {:>3} {:>5} {:>5} {:>4} {:>14} {:>10}  ratio",
        "layer", "kind", "Dk", "M", "N", "Df", "macs", "params"
    );
    for row in &profile.rows {
        let kind = row.kind.map_or("separable", |k| k.as_str());
        let ratio = profile
            .pairs
            .iter()
            .find(|p| p.pointwise_index.to_string() == row.layer_label)
            .map(|p| {
                let r = p.measured_ratio();
                format!(
                    "{}/{} ({:.6})",
                    r.numer(),
                    r.denom(),
                    *r.numer() as f64 / *r.denom() as f64
                )
            })
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{:>5} {:<12} {:>3} {:>5} {:>5} {:>4} {:>14} {:>10}  {}",
            row.layer_label,
            kind,
            row.kernel,
            row.in_channels,
            row.out_channels,
            row.out_size,
            row.macs,
            row.params,
            ratio
        );
    }
    let t = profile.totals;
    let _ = writeln!(
        out,
        "total: {} conv layers, {} macs, {} params ({} bytes), {} biases",
        profile.rows.len(),
        t.macs,
        t.params,
        t.param_bytes,
        t.bias_params
    );
    Ok(out)
}

fn run_analyze(args: AnalyzeArgs) -> CmdResult {
    let config = load_config(args.config.as_deref(), None)?;
    let table = analysis_table(&config)?;
    if let Some(path) = &args.csv {
        let csv = profile_network(&config)?.to_csv();
        fs::write(path, csv).map_err(|e| Failure::internal(path.display(), e))?;
    }
    write_output(None, &table)
}

fn run_init(args: InitArgs) -> CmdResult {
    let config = load_config(args.config.as_deref(), args.taps.as_deref())?;
    let head = HeadSpec::for_config(&config);
    let store = if args.zero {
        zero_init(&config, &head)?
    } else {
        random_init(&config, &head, args.seed)?
    };
    save_weights(&store, &args.out).map_err(|e| Failure::internal(args.out.display(), e))?;
    println!(
        "wrote {} arrays, {} values to {}",
        store.len(),
        store.total_values(),
        args.out.display()
    );
    Ok(())
}
