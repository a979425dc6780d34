//! Detection scoring and the throughput benchmark.
//!
//! The false-positive rate is the share of emitted detections that match no
//! ground-truth box: detections are visited best-first, and each claims the
//! unclaimed same-class ground-truth box it overlaps most, provided the IoU
//! reaches `iou_min`. Whatever is left unclaimed counts as a false positive.

use std::cell::Cell;
use std::collections::HashMap;
use std::time::{Duration, Instant};

use crate::complexity::{profile_detector, BYTES_PER_PARAM};
use crate::error::{Error, Result};
use crate::graph::{validate_config, NetworkConfig};
use crate::nn::Tensor;
use crate::ssd::{iou, CornerBox, Detection, Detector, HeadSpec};
use crate::weights::WeightStore;

pub const DEFAULT_IOU_MIN: f32 = 0.5;
pub const DEFAULT_BENCH_SECONDS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub class_id: usize,
    pub bbox: CornerBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub frame: String,
    pub boxes: Vec<LabeledBox>,
}

/// Parses `frame_id class_id xmin ymin xmax ymax` lines. A line holding
/// only a frame id declares a frame with no objects. Blank lines and lines
/// starting with `#` are skipped. Frames keep first-appearance order.
pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruth>> {
    let mut frames: Vec<GroundTruth> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |what: &str| Error::Usage(format!("ground truth line {}: {what}", lineno + 1));
        if fields.len() != 1 && fields.len() != 6 {
            return Err(bad("expected `frame_id class_id xmin ymin xmax ymax`"));
        }
        let slot = *index.entry(fields[0].to_string()).or_insert_with(|| {
            frames.push(GroundTruth {
                frame: fields[0].to_string(),
                boxes: Vec::new(),
            });
            frames.len() - 1
        });
        if fields.len() == 1 {
            continue;
        }
        let class_id: usize = fields[1]
            .parse()
            .map_err(|_| bad("class id is not an integer"))?;
        let mut coords = [0.0f32; 4];
        for (c, f) in coords.iter_mut().zip(&fields[2..]) {
            *c = f.parse().map_err(|_| bad("coordinate is not a number"))?;
        }
        let bbox = CornerBox::new(coords[0], coords[1], coords[2], coords[3]);
        if !bbox.is_valid() {
            return Err(bad("box needs xmin < xmax and ymin < ymax"));
        }
        frames[slot].boxes.push(LabeledBox { class_id, bbox });
    }
    Ok(frames)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FprReport {
    pub total_detections: usize,
    pub matched: usize,
    pub false_positives: usize,
    /// `100 * false_positives / total_detections`, 0 with no detections.
    pub percent: f64,
}

/// Greedy one-to-one matching for one frame. Returns which detections
/// matched and which truth boxes were claimed.
fn match_frame(dets: &[Detection], truth: &[LabeledBox], iou_min: f32) -> (Vec<bool>, Vec<bool>) {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .total_cmp(&dets[a].score)
            .then(dets[a].prior_index.cmp(&dets[b].prior_index))
            .then(a.cmp(&b))
    });
    let mut claimed = vec![false; truth.len()];
    let mut matched = vec![false; dets.len()];
    for i in order {
        let d = &dets[i];
        let mut best: Option<(usize, f32)> = None;
        for (g, gt) in truth.iter().enumerate() {
            if claimed[g] || gt.class_id != d.class_id {
                continue;
            }
            let overlap = iou(&d.bbox, &gt.bbox);
            if overlap >= iou_min && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        if let Some((g, _)) = best {
            claimed[g] = true;
            matched[i] = true;
        }
    }
    (matched, claimed)
}

pub fn false_positive_rate(
    detections: &[(String, Vec<Detection>)],
    truth: &[GroundTruth],
    iou_min: f32,
) -> Result<FprReport> {
    let by_frame: HashMap<&str, &[LabeledBox]> = truth
        .iter()
        .map(|g| (g.frame.as_str(), g.boxes.as_slice()))
        .collect();
    let mut total = 0;
    let mut matched = 0;
    for (frame, dets) in detections {
        let gt = by_frame.get(frame.as_str()).ok_or_else(|| {
            Error::Usage(format!(
                "detections reference frame '{frame}' absent from ground truth"
            ))
        })?;
        total += dets.len();
        matched += match_frame(dets, gt, iou_min)
            .0
            .iter()
            .filter(|&&m| m)
            .count();
    }
    let false_positives = total - matched;
    let percent = if total == 0 {
        0.0
    } else {
        100.0 * false_positives as f64 / total as f64
    };
    Ok(FprReport {
        total_detections: total,
        matched,
        false_positives,
        percent,
    })
}

/// Monotonic time source for the benchmark loop.
pub trait Clock {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
}

#[derive(Debug, Clone)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Returns `0, step, 2*step, ...` on successive calls. The benchmark loop
/// reads the clock once before the run and once after each frame, so every
/// frame appears to take exactly `step`.
#[derive(Debug)]
pub struct SteppingClock {
    step: Duration,
    calls: Cell<u32>,
}

impl SteppingClock {
    pub fn new(step: Duration) -> Self {
        SteppingClock {
            step,
            calls: Cell::new(0),
        }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> Duration {
        let n = self.calls.get();
        self.calls.set(n + 1);
        self.step * n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub frames_processed: usize,
    pub wall_seconds: f64,
    pub fps_avg: f64,
    /// Most frames completed inside any one-second window.
    pub fps_peak: f64,
    pub per_frame_ms: Vec<f64>,
    pub param_bytes: u64,
    pub peak_activation_bytes: u64,
}

pub const BENCH_CSV_HEADER: &str =
    "frames,seconds,fps_avg,fps_peak,param_bytes,peak_activation_bytes";

impl BenchReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{},{}",
            self.frames_processed,
            self.wall_seconds,
            self.fps_avg,
            self.fps_peak,
            self.param_bytes,
            self.peak_activation_bytes
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{BENCH_CSV_HEADER}\n{}\n", self.csv_row())
    }
}

/// Frame timings from [`bench_loop`].
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub frames_processed: usize,
    pub wall: Duration,
    /// Completion time of each frame, relative to the start of the run.
    pub completions: Vec<Duration>,
    pub latencies: Vec<Duration>,
}

impl Timing {
    pub fn fps_avg(&self) -> f64 {
        self.frames_processed as f64 / self.wall.as_secs_f64()
    }

    /// Largest number of completions in any one-second window, floored at
    /// the average so that runs shorter than a window stay consistent.
    pub fn fps_peak(&self) -> f64 {
        let window = Duration::from_secs(1);
        let mut best = 0usize;
        let mut lo = 0;
        for (hi, &end) in self.completions.iter().enumerate() {
            while self.completions[lo] + window <= end {
                lo += 1;
            }
            best = best.max(hi - lo + 1);
        }
        (best as f64).max(self.fps_avg())
    }
}

/// Calls `run(frame)` over `0..frame_count` cyclically until `duration` of
/// clock time has passed. Always processes at least one frame.
pub fn bench_loop<C: Clock + ?Sized>(
    clock: &C,
    frame_count: usize,
    duration: Duration,
    mut run: impl FnMut(usize) -> Result<()>,
) -> Result<Timing> {
    if frame_count == 0 {
        return Err(Error::Usage("benchmark needs at least one frame".into()));
    }
    if duration.is_zero() {
        return Err(Error::Usage("benchmark duration must be positive".into()));
    }
    let start = clock.now();
    let mut prev = start;
    let mut completions = Vec::new();
    let mut latencies = Vec::new();
    let mut i = 0;
    loop {
        run(i % frame_count)?;
        let now = clock.now();
        latencies.push(now.saturating_sub(prev));
        completions.push(now.saturating_sub(start));
        prev = now;
        i += 1;
        if now.saturating_sub(start) >= duration {
            break;
        }
    }
    let wall = prev.saturating_sub(start);
    if wall.is_zero() {
        return Err(Error::Usage(
            "clock did not advance during the benchmark".into(),
        ));
    }
    Ok(Timing {
        frames_processed: i,
        wall,
        completions,
        latencies,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryReport {
    /// 4 bytes per filter value across backbone and heads, biases excluded.
    pub param_bytes: u64,
    /// 4 bytes per element of the largest input+output pair of any layer.
    pub peak_activation_bytes: u64,
}

pub fn memory_report(config: &NetworkConfig, head: &HeadSpec) -> Result<MemoryReport> {
    let profile = profile_detector(config, head)?;
    let shapes = validate_config(config)?;
    let elems = |s: (usize, usize, usize)| (s.0 * s.1 * s.2) as u64;
    let mut peak = shapes
        .layers
        .iter()
        .map(|l| elems(l.input) + elems(l.output))
        .max()
        .unwrap_or(0);
    let per_cell = head.priors_per_location();
    for &tap in &config.tap_indices {
        let (c, h, w) = shapes.get(tap).expect("validated tap").output;
        let outputs = per_cell * (4 + config.num_classes);
        peak = peak.max(elems((c, h, w)) + elems((outputs, h, w)));
    }
    Ok(MemoryReport {
        param_bytes: profile.totals.param_bytes,
        peak_activation_bytes: peak * BYTES_PER_PARAM,
    })
}

/// Runs full detections on `frames` for `duration` of `clock` time.
pub fn bench_fps<C: Clock + ?Sized>(
    config: &NetworkConfig,
    weights: &WeightStore,
    head: &HeadSpec,
    frames: &[Tensor],
    duration: Duration,
    clock: &C,
) -> Result<BenchReport> {
    if frames.is_empty() {
        return Err(Error::Usage("benchmark needs at least one frame".into()));
    }
    let detector = Detector::new(config, weights, head)?;
    let memory = memory_report(config, head)?;
    let timing = bench_loop(clock, frames.len(), duration, |i| {
        detector.detect(&frames[i]).map(|_| ())
    })?;
    Ok(BenchReport {
        frames_processed: timing.frames_processed,
        wall_seconds: timing.wall.as_secs_f64(),
        fps_avg: timing.fps_avg(),
        fps_peak: timing.fps_peak(),
        per_frame_ms: timing
            .latencies
            .iter()
            .map(|d| d.as_secs_f64() * 1e3)
            .collect(),
        param_bytes: memory.param_bytes,
        peak_activation_bytes: memory.peak_activation_bytes,
    })
}
