//! Synthetic sequences with ground truth, the exhaustive sliding-window
//! baseline, and direction-prediction metrics.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::config::{self, ConfigError};
use crate::frame::{Frame, FrameError, Patch, PatchCenter, VARIANCE_FLOOR};
use crate::predictor::{
    quantize_direction, track_step, Direction, PredictorError, SearchOutcome, TrackerConfig, TrackerState,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("object leaves the frame at frame {frame} (center {x}, {y})")]
    PathExitsFrame { frame: usize, x: i64, y: i64 },
    #[error("template side {side} does not fit a {width}x{height} frame")]
    TemplateTooLarge { side: usize, width: usize, height: usize },
    #[error("prediction and truth lengths differ: {predicted} vs {truth}")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("invalid sequence spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

/// What the tracked object looks like.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectAppearance {
    /// Isotropic Gaussian bump added to the background.
    Blob { sigma: f64, amplitude: f64 },
    /// Square checkerboard of `size` pixels with `cell`-pixel squares alternating
    /// between `background` and `background + amplitude`.
    Checkerboard { cell: usize, size: usize, amplitude: f64 },
}

impl ObjectAppearance {
    /// Half extent in pixels; the object is drawn entirely within this radius.
    pub fn extent(&self) -> i64 {
        match *self {
            ObjectAppearance::Blob { sigma, .. } => (3.0 * sigma).ceil() as i64,
            ObjectAppearance::Checkerboard { size, .. } => (size / 2) as i64,
        }
    }

    fn value(&self, dx: i64, dy: i64) -> f64 {
        match *self {
            ObjectAppearance::Blob { sigma, amplitude } => {
                let r = self.extent();
                if dx.abs() > r || dy.abs() > r {
                    return 0.0;
                }
                let d2 = (dx * dx + dy * dy) as f64;
                amplitude * (-d2 / (2.0 * sigma * sigma)).exp()
            }
            ObjectAppearance::Checkerboard { cell, size, amplitude } => {
                let offset = (size / 2) as i64;
                let (x, y) = (dx + offset, dy + offset);
                if x < 0 || y < 0 || x >= size as i64 || y >= size as i64 {
                    return 0.0;
                }
                let parity = (x as usize / cell + y as usize / cell) % 2;
                if parity == 0 {
                    amplitude
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub width: usize,
    pub height: usize,
    pub object: ObjectAppearance,
    pub background: f64,
    pub start: PatchCenter,
    /// Displacement between frame `k` and frame `k + 1`; the sequence has `path.len() + 1` frames.
    pub path: Vec<(i64, i64)>,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Quantization threshold for the ground-truth directions.
    pub dead_zone: f64,
}

/// Parameters of a random piecewise-constant path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomPath {
    pub steps: usize,
    pub max_step: i64,
    pub segment_min: usize,
    pub segment_max: usize,
    /// Probability that a moving segment is followed by a stationary one.
    pub stationary: f64,
    /// Minimum distance kept between the object center and the frame border.
    pub margin: i64,
    /// Stationary steps before the first segment.
    pub lead_in: usize,
}

impl Default for RandomPath {
    fn default() -> Self {
        RandomPath {
            steps: 199,
            max_step: 2,
            segment_min: 30,
            segment_max: 60,
            stationary: 0.5,
            margin: 32,
            lead_in: 20,
        }
    }
}

/// Axis-aligned constant-velocity segments with speeds in `1..=max_step`,
/// after a stationary lead-in and with pauses between some of them. Each
/// segment is drawn so it stays inside the margin; when no draw fits, the
/// object pauses instead.
pub fn random_path(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    start: PatchCenter,
    params: &RandomPath,
) -> Vec<(i64, i64)> {
    let inside = |x: i64, y: i64| {
        x >= params.margin
            && y >= params.margin
            && x <= width as i64 - 1 - params.margin
            && y <= height as i64 - 1 - params.margin
    };
    let mut path = vec![(0, 0); params.lead_in.min(params.steps)];
    let (mut x, mut y) = (start.x, start.y);
    let mut moving = false;
    while path.len() < params.steps {
        let len = rng
            .random_range(params.segment_min..=params.segment_max.max(params.segment_min))
            .clamp(1, params.steps - path.len());
        let pause = moving && rng.random_bool(params.stationary.clamp(0.0, 1.0));
        let mut v = (0, 0);
        if !pause && params.max_step > 0 {
            for _ in 0..16 {
                let speed = rng.random_range(1..=params.max_step);
                let cand = match rng.random_range(0..4) {
                    0 => (speed, 0),
                    1 => (-speed, 0),
                    2 => (0, speed),
                    _ => (0, -speed),
                };
                if inside(x + cand.0 * len as i64, y + cand.1 * len as i64) {
                    v = cand;
                    break;
                }
            }
        }
        moving = v != (0, 0);
        x += v.0 * len as i64;
        y += v.1 * len as i64;
        path.extend(std::iter::repeat_n(v, len));
    }
    path
}

impl SequenceSpec {
    pub fn frame_count(&self) -> usize {
        self.path.len() + 1
    }

    /// Reference synthetic setup: a 320×240 frame with a small Gaussian blob on a
    /// random piecewise path of at most 2 px per frame and light noise.
    pub fn reference(seed: u64) -> Self {
        let (width, height) = (320, 240);
        let start = PatchCenter::new(160, 120);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F9A_7E00);
        let path = random_path(&mut rng, width, height, start, &RandomPath::default());
        SequenceSpec {
            width,
            height,
            object: ObjectAppearance::Blob {
                sigma: 2.0,
                amplitude: 0.6,
            },
            background: 0.2,
            start,
            path,
            noise_sigma: 0.02,
            seed,
            dead_zone: 0.5,
        }
    }

    /// Parses `key = value` text. The path is either `path = random` (with the
    /// `steps`, `max_step`, `segment_min`, `segment_max`, `stationary`, `margin`, `lead_in`
    /// keys) or an explicit list of `count:dx,dy` segments separated by `;`.
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let pairs = config::parse_pairs(text)?;
        let get = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        const KEYS: [&str; 20] = [
            "width",
            "height",
            "object",
            "sigma",
            "amplitude",
            "cell",
            "size",
            "background",
            "start_x",
            "start_y",
            "path",
            "steps",
            "max_step",
            "segment_min",
            "segment_max",
            "stationary",
            "margin",
            "lead_in",
            "noise_sigma",
            "seed",
        ];
        for (k, _) in &pairs {
            if !KEYS.contains(&k.as_str()) && k != "dead_zone" {
                return Err(ConfigError::UnknownKey(k.clone()).into());
            }
        }
        fn num<T: std::str::FromStr>(key: &str, v: Option<&str>, default: T) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            v.map_or(Ok(default), |v| config::parse_value(key, v))
        }
        let width: usize = num("width", get("width"), 320)?;
        let height: usize = num("height", get("height"), 240)?;
        let amplitude = num("amplitude", get("amplitude"), 0.6)?;
        let object = match get("object").unwrap_or("blob") {
            "blob" => ObjectAppearance::Blob {
                sigma: num("sigma", get("sigma"), 2.0)?,
                amplitude,
            },
            "checkerboard" => ObjectAppearance::Checkerboard {
                cell: num("cell", get("cell"), 4)?,
                size: num("size", get("size"), 16)?,
                amplitude,
            },
            other => return Err(config::invalid("object", other, "expected blob or checkerboard").into()),
        };
        let start = PatchCenter::new(
            num("start_x", get("start_x"), (width / 2) as i64)?,
            num("start_y", get("start_y"), (height / 2) as i64)?,
        );
        let seed = num("seed", get("seed"), 1u64)?;
        let path = match get("path").unwrap_or("random") {
            "random" => {
                let d = RandomPath::default();
                let params = RandomPath {
                    steps: num("steps", get("steps"), d.steps)?,
                    max_step: num("max_step", get("max_step"), d.max_step)?,
                    segment_min: num("segment_min", get("segment_min"), d.segment_min)?,
                    segment_max: num("segment_max", get("segment_max"), d.segment_max)?,
                    stationary: num("stationary", get("stationary"), d.stationary)?,
                    margin: num("margin", get("margin"), d.margin)?,
                    lead_in: num("lead_in", get("lead_in"), d.lead_in)?,
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F9A_7E00);
                random_path(&mut rng, width, height, start, &params)
            }
            explicit => parse_segments(explicit)?,
        };
        let spec = SequenceSpec {
            width,
            height,
            object,
            background: num("background", get("background"), 0.2)?,
            start,
            path,
            noise_sigma: num("noise_sigma", get("noise_sigma"), 0.02)?,
            seed,
            dead_zone: num("dead_zone", get("dead_zone"), 0.5)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.width == 0 || self.height == 0 {
            return Err(BenchError::InvalidSpec("frame dimensions must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(BenchError::InvalidSpec("noise_sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.background) {
            return Err(BenchError::InvalidSpec("background must lie in [0, 1]".into()));
        }
        match self.object {
            ObjectAppearance::Blob { sigma, .. } if sigma.is_nan() || sigma <= 0.0 => {
                Err(BenchError::InvalidSpec("sigma must be > 0".into()))
            }
            ObjectAppearance::Checkerboard { cell, size, .. } if cell == 0 || size == 0 => {
                Err(BenchError::InvalidSpec("cell and size must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// True object center in every frame.
    pub fn centers(&self) -> Vec<PatchCenter> {
        let mut c = self.start;
        let mut out = Vec::with_capacity(self.frame_count());
        out.push(c);
        for &(dx, dy) in &self.path {
            c = PatchCenter::new(c.x + dx, c.y + dy);
            out.push(c);
        }
        out
    }
}

fn parse_segments(text: &str) -> Result<Vec<(i64, i64)>, BenchError> {
    let bad = |s: &str| config::invalid("path", s, "expected `count:dx,dy` segments separated by `;`");
    let mut path = Vec::new();
    for seg in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (count, step) = seg.split_once(':').ok_or_else(|| bad(seg))?;
        let (dx, dy) = step.split_once(',').ok_or_else(|| bad(seg))?;
        let count: usize = count.trim().parse().map_err(|_| bad(seg))?;
        let dx: i64 = dx.trim().parse().map_err(|_| bad(seg))?;
        let dy: i64 = dy.trim().parse().map_err(|_| bad(seg))?;
        path.extend(std::iter::repeat_n((dx, dy), count));
    }
    Ok(path)
}

/// True center and direction of every frame. Frame 0 is `Stationary`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub centers: Vec<PatchCenter>,
    pub directions: Vec<Direction>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub const CSV_HEADER: &'static str = "seq,true_x,true_y,true_direction";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (seq, (c, d)) in self.centers.iter().zip(&self.directions).enumerate() {
            out.push_str(&format!("{seq},{},{},{d}\n", c.x, c.y));
        }
        out
    }
}

pub fn gen_sequence(spec: &SequenceSpec) -> Result<(Vec<Frame>, GroundTruth), BenchError> {
    spec.validate()?;
    let centers = spec.centers();
    let r = spec.object.extent();
    for (frame, c) in centers.iter().enumerate() {
        if c.x - r < 0 || c.y - r < 0 || c.x + r >= spec.width as i64 || c.y + r >= spec.height as i64 {
            return Err(BenchError::PathExitsFrame { frame, x: c.x, y: c.y });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).map_err(|e| BenchError::InvalidSpec(e.to_string()))?;
    let mut frames = Vec::with_capacity(centers.len());
    for (seq, c) in centers.iter().enumerate() {
        let mut pixels = vec![spec.background; spec.width * spec.height];
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = ((c.x + dx) as usize, (c.y + dy) as usize);
                pixels[y * spec.width + x] += spec.object.value(dx, dy);
            }
        }
        if spec.noise_sigma > 0.0 {
            for p in pixels.iter_mut() {
                *p += noise.sample(&mut rng);
            }
        }
        for p in pixels.iter_mut() {
            *p = p.clamp(0.0, 1.0);
        }
        frames.push(Frame::new(spec.width, spec.height, pixels, seq as u64)?);
    }
    let mut directions = vec![Direction::Stationary];
    directions.extend(
        spec.path
            .iter()
            .map(|&(dx, dy)| quantize_direction(dx as f64, dy as f64, spec.dead_zone)),
    );
    Ok((frames, GroundTruth { centers, directions }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExhaustiveMatch {
    pub center: PatchCenter,
    pub score: f64,
    pub candidates: usize,
}

/// Scores every valid center in row-major order and returns the global NCC
/// argmax (first wins ties). Window statistics come from integral images, so
/// scores agree with [`crate::frame::correlation`] to rounding error.
pub fn exhaustive_search(template: &Patch, frame: &Frame) -> Result<ExhaustiveMatch, BenchError> {
    let half = template.half();
    let side = template.side();
    let (w, h) = (frame.width(), frame.height());
    if side > w || side > h {
        return Err(BenchError::TemplateTooLarge {
            side,
            width: w,
            height: h,
        });
    }
    let nx = w - 2 * half;
    let ny = h - 2 * half;
    let candidates = nx * ny;
    let n = (side * side) as f64;

    let t = template.pixels();
    let t_mean = t.iter().sum::<f64>() / n;
    let centered: Vec<f64> = t.iter().map(|v| v - t_mean).collect();
    let t_energy: f64 = centered.iter().map(|v| v * v).sum();
    if t_energy <= VARIANCE_FLOOR * n {
        return Ok(ExhaustiveMatch {
            center: PatchCenter::new(half as i64, half as i64),
            score: 0.0,
            candidates,
        });
    }

    // integral images of the frame offset by its mean, which keeps the
    // window variance well conditioned
    let f_mean = frame.pixels().iter().sum::<f64>() / (w * h) as f64;
    let stride = w + 1;
    let mut s1 = vec![0.0f64; stride * (h + 1)];
    let mut s2 = vec![0.0f64; stride * (h + 1)];
    for y in 0..h {
        let (mut r1, mut r2) = (0.0, 0.0);
        for (x, &v) in frame.row(y).iter().enumerate() {
            let g = v - f_mean;
            r1 += g;
            r2 += g * g;
            s1[(y + 1) * stride + x + 1] = s1[y * stride + x + 1] + r1;
            s2[(y + 1) * stride + x + 1] = s2[y * stride + x + 1] + r2;
        }
    }
    let window = |s: &[f64], x0: usize, y0: usize| {
        s[(y0 + side) * stride + x0 + side] - s[y0 * stride + x0 + side] - s[(y0 + side) * stride + x0]
            + s[y0 * stride + x0]
    };

    let mut best = ExhaustiveMatch {
        center: PatchCenter::new(half as i64, half as i64),
        score: f64::NEG_INFINITY,
        candidates,
    };
    let mut acc = vec![0.0f64; nx];
    for y0 in 0..ny {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for r in 0..side {
            let row = frame.row(y0 + r);
            let coeffs = &centered[r * side..(r + 1) * side];
            for (c, &k) in coeffs.iter().enumerate() {
                for (a, &v) in acc.iter_mut().zip(&row[c..c + nx]) {
                    *a += k * v;
                }
            }
        }
        for (x0, &num) in acc.iter().enumerate() {
            let sum = window(&s1, x0, y0);
            let var = window(&s2, x0, y0) - sum * sum / n;
            let score = if var <= VARIANCE_FLOOR * n {
                0.0
            } else {
                (num / (t_energy * var).sqrt()).clamp(-1.0, 1.0)
            };
            if score > best.score {
                best.score = score;
                best.center = PatchCenter::new((x0 + half) as i64, (y0 + half) as i64);
            }
        }
    }
    Ok(best)
}

/// Per-frame rates; `None` when the denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionMetrics {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub motion_frames: usize,
    pub stationary_frames: usize,
}

/// TPR over frames whose true direction is not `Stationary`; FPR over the
/// stationary frames that were predicted as moving.
pub fn eval_directions(predicted: &[Direction], truth: &[Direction]) -> Result<DirectionMetrics, BenchError> {
    if predicted.len() != truth.len() {
        return Err(BenchError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    let (mut motion, mut hits, mut still, mut false_moves) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        if t == Direction::Stationary {
            still += 1;
            if p != Direction::Stationary {
                false_moves += 1;
            }
        } else {
            motion += 1;
            if p == t {
                hits += 1;
            }
        }
    }
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(DirectionMetrics {
        tpr: ratio(hits, motion),
        fpr: ratio(false_moves, still),
        motion_frames: motion,
        stationary_frames: still,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub fps_predictor: f64,
    pub fps_baseline: f64,
    pub speedup: f64,
    pub candidates_predictor: u64,
    pub candidates_baseline: u64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str =
        "tpr,fpr,fps_predictor,fps_baseline,speedup,candidates_predictor,candidates_baseline";

    pub fn candidate_ratio(&self) -> f64 {
        self.candidates_predictor as f64 / self.candidates_baseline as f64
    }

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        format!(
            "{},{},{:.3},{:.3},{:.3},{},{}",
            opt(self.tpr),
            opt(self.fpr),
            self.fps_predictor,
            self.fps_baseline,
            self.speedup,
            self.candidates_predictor,
            self.candidates_baseline
        )
    }
}

/// Predictor and baseline results for one tracked frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub seq: u64,
    pub truth_center: PatchCenter,
    pub truth_direction: Direction,
    pub direction: Direction,
    pub outcome: SearchOutcome,
    pub baseline: ExhaustiveMatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub metrics: MetricsReport,
    pub frames: Vec<FrameRecord>,
}

/// Runs the predictor over frames after the first, returning one step per frame.
pub fn run_tracker(
    frames: &[Frame],
    init: PatchCenter,
    config: TrackerConfig,
) -> Result<Vec<(Direction, SearchOutcome, TrackerState)>, BenchError> {
    let first = frames
        .first()
        .ok_or_else(|| BenchError::InvalidSpec("empty sequence".into()))?;
    let mut state = TrackerState::new(first, init, config)?;
    let mut out = Vec::with_capacity(frames.len().saturating_sub(1));
    for frame in &frames[1..] {
        let step = track_step(&state, frame)?;
        state = step.state.clone();
        out.push((step.direction, step.outcome, step.state));
    }
    Ok(out)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Tracks the generated sequence with the predictor and with per-frame
/// exhaustive search, timing each over `repetitions` runs (at least 3) and
/// reporting the median frame rate.
pub fn run_benchmark(spec: &SequenceSpec, config: &TrackerConfig, repetitions: usize) -> Result<BenchRun, BenchError> {
    let (frames, truth) = gen_sequence(spec)?;
    if frames.len() < 2 {
        return Err(BenchError::InvalidSpec("need at least two frames".into()));
    }
    let reps = repetitions.max(3);
    let tracked = frames.len() - 1;

    let mut predictor_times = Vec::with_capacity(reps);
    let mut steps = Vec::new();
    for rep in 0..reps {
        let t = Instant::now();
        let run = run_tracker(&frames, spec.start, *config)?;
        predictor_times.push(t.elapsed().as_secs_f64());
        if rep == 0 {
            steps = run;
        }
    }

    let template = crate::frame::extract_patch(&frames[0], spec.start, config.half)?;
    let mut baseline_times = Vec::with_capacity(reps);
    let mut baseline = Vec::new();
    for rep in 0..reps {
        let t = Instant::now();
        let run = frames[1..]
            .iter()
            .map(|f| exhaustive_search(&template, f))
            .collect::<Result<Vec<_>, _>>()?;
        baseline_times.push(t.elapsed().as_secs_f64());
        if rep == 0 {
            baseline = run;
        }
    }

    let predicted: Vec<Direction> = steps.iter().map(|(d, _, _)| *d).collect();
    let dm = eval_directions(&predicted, &truth.directions[1..])?;
    let fps = |secs: f64| tracked as f64 / secs.max(1e-12);
    let fps_predictor = fps(median(predictor_times));
    let fps_baseline = fps(median(baseline_times));
    let records: Vec<FrameRecord> = steps
        .iter()
        .zip(&baseline)
        .enumerate()
        .map(|(i, ((direction, outcome, _), base))| FrameRecord {
            seq: (i + 1) as u64,
            truth_center: truth.centers[i + 1],
            truth_direction: truth.directions[i + 1],
            direction: *direction,
            outcome: *outcome,
            baseline: *base,
        })
        .collect();
    let metrics = MetricsReport {
        tpr: dm.tpr,
        fpr: dm.fpr,
        fps_predictor,
        fps_baseline,
        speedup: fps_predictor / fps_baseline,
        candidates_predictor: records.iter().map(|r| r.outcome.candidates_examined() as u64).sum(),
        candidates_baseline: records.iter().map(|r| r.baseline.candidates as u64).sum(),
    };
    Ok(BenchRun {
        metrics,
        frames: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{correlation, extract_patch};
    use crate::predictor::bfs_search;
    use proptest::prelude::*;

    fn small_spec(path: Vec<(i64, i64)>, noise: f64) -> SequenceSpec {
        SequenceSpec {
            width: 80,
            height: 60,
            object: ObjectAppearance::Blob {
                sigma: 2.0,
                amplitude: 0.6,
            },
            background: 0.2,
            start: PatchCenter::new(30, 30),
            path,
            noise_sigma: noise,
            seed: 3,
            dead_zone: 0.5,
        }
    }

    /// Direct scan through `correlation`, independent of the integral-image route.
    fn brute_argmax(template: &Patch, frame: &Frame) -> (PatchCenter, f64) {
        let h = template.half() as i64;
        let mut best = (PatchCenter::new(h, h), f64::NEG_INFINITY);
        for y in h..frame.height() as i64 - h {
            for x in h..frame.width() as i64 - h {
                let c = PatchCenter::new(x, y);
                let s = correlation(template, &extract_patch(frame, c, h as usize).unwrap()).unwrap();
                if s > best.1 {
                    best = (c, s);
                }
            }
        }
        best
    }

    #[test]
    fn static_noise_free_frames_are_identical() {
        let (frames, truth) = gen_sequence(&small_spec(vec![(0, 0); 4], 0.0)).unwrap();
        assert_eq!(frames.len(), 5);
        assert!(frames.windows(2).all(|w| w[0].pixels() == w[1].pixels()));
        assert!(truth.directions.iter().all(|&d| d == Direction::Stationary));
    }

    #[test]
    fn path_accumulates() {
        let spec = small_spec(vec![(2, 0); 6], 0.0);
        let (_, truth) = gen_sequence(&spec).unwrap();
        for (k, c) in truth.centers.iter().enumerate() {
            assert_eq!(*c, PatchCenter::new(30 + 2 * k as i64, 30));
        }
        assert_eq!(truth.directions[0], Direction::Stationary);
        assert!(truth.directions[1..].iter().all(|&d| d == Direction::Right));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec(vec![(1, -1); 5], 0.05);
        let (a, _) = gen_sequence(&spec).unwrap();
        let (b, _) = gen_sequence(&spec).unwrap();
        assert_eq!(a, b);
        let (c, _) = gen_sequence(&SequenceSpec { seed: 4, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn leaving_the_frame_is_an_error() {
        let spec = small_spec(vec![(10, 0); 6], 0.0);
        assert!(matches!(
            gen_sequence(&spec),
            Err(BenchError::PathExitsFrame { frame: 5, .. })
        ));
    }

    #[test]
    fn exhaustive_recovers_planted_template() {
        let spec = small_spec(vec![(3, 2)], 0.0);
        let (frames, truth) = gen_sequence(&spec).unwrap();
        let template = extract_patch(&frames[0], spec.start, 6).unwrap();
        let m = exhaustive_search(&template, &frames[1]).unwrap();
        assert_eq!(m.center, truth.centers[1]);
        assert!((m.score - 1.0).abs() < 1e-9);
        assert_eq!(m.candidates, (80 - 12) * (60 - 12));
    }

    #[test]
    fn exhaustive_agrees_with_direct_scan() {
        let spec = small_spec(vec![(1, 1), (2, -1)], 0.1);
        let (frames, _) = gen_sequence(&spec).unwrap();
        let template = extract_patch(&frames[0], spec.start, 5).unwrap();
        for f in &frames[1..] {
            let m = exhaustive_search(&template, f).unwrap();
            let (c, s) = brute_argmax(&template, f);
            assert_eq!(m.center, c);
            assert!((m.score - s).abs() < 1e-9);
        }
    }

    #[test]
    fn exhaustive_uniform_frame_takes_first_center() {
        let src = gen_sequence(&small_spec(vec![], 0.0)).unwrap().0;
        let template = extract_patch(&src[0], PatchCenter::new(30, 30), 4).unwrap();
        let flat = Frame::uniform(40, 30, 0.5, 0).unwrap();
        let m = exhaustive_search(&template, &flat).unwrap();
        assert_eq!(m.center, PatchCenter::new(4, 4));
        assert_eq!(m.score, 0.0);
    }

    #[test]
    fn exhaustive_candidate_formula_and_size_check() {
        let flat = Frame::uniform(320, 240, 0.5, 0).unwrap();
        let template = Patch::new(PatchCenter::new(0, 0), 15, vec![0.3; 31 * 31]).unwrap();
        assert_eq!(exhaustive_search(&template, &flat).unwrap().candidates, 60_900);
        let tiny = Frame::uniform(20, 40, 0.5, 0).unwrap();
        assert!(matches!(
            exhaustive_search(&template, &tiny),
            Err(BenchError::TemplateTooLarge { side: 31, .. })
        ));
    }

    #[test]
    fn metric_examples() {
        use Direction::*;
        let truth = [Right, Right, Stationary, Top, Stationary, Right];
        let m = eval_directions(&truth, &truth).unwrap();
        assert_eq!((m.tpr, m.fpr), (Some(1.0), Some(0.0)));

        let pred = [Right, Left, Stationary, Top, Right, Right];
        let m = eval_directions(&pred, &truth).unwrap();
        assert_eq!((m.tpr, m.fpr), (Some(0.75), Some(0.5)));

        let moving = [Left, Top, Bottom];
        let m = eval_directions(&[Stationary; 3], &moving).unwrap();
        assert_eq!((m.tpr, m.fpr), (Some(0.0), None));

        assert!(matches!(
            eval_directions(&[Right], &[]),
            Err(BenchError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn static_sequence_resolves_at_layer_zero() {
        let spec = SequenceSpec {
            width: 120,
            height: 100,
            start: PatchCenter::new(60, 50),
            ..small_spec(vec![(0, 0); 9], 0.01)
        };
        let config = TrackerConfig {
            half: 10,
            ..TrackerConfig::default()
        };
        let run = run_benchmark(&spec, &config, 3).unwrap();
        assert_eq!(run.metrics.candidates_predictor, 9);
        assert!(run.frames.iter().all(|r| r.outcome.layer_reached() == 0));
        assert_eq!(run.metrics.fpr, Some(0.0));
        assert_eq!(run.metrics.tpr, None);
    }

    #[test]
    fn one_pixel_motion_matches_exhaustive_oracle() {
        // Sharp texture and unit steps keep every winning candidate exact, so
        // the layered search lands on the global argmax frame after frame.
        let spec = SequenceSpec {
            width: 120,
            height: 100,
            object: ObjectAppearance::Checkerboard {
                cell: 3,
                size: 15,
                amplitude: 0.6,
            },
            start: PatchCenter::new(50, 50),
            path: [vec![(1, 0); 8], vec![(0, 1); 6], vec![(0, 0); 4], vec![(-1, 0); 6]].concat(),
            ..small_spec(vec![], 0.0)
        };
        let config = TrackerConfig {
            half: 10,
            ..TrackerConfig::default()
        };
        let run = run_benchmark(&spec, &config, 3).unwrap();
        for r in &run.frames {
            if r.baseline.score > config.threshold {
                let SearchOutcome::Found { center, .. } = r.outcome else {
                    panic!("frame {} lost", r.seq);
                };
                assert_eq!(center, r.baseline.center, "frame {}", r.seq);
            }
            assert!(r.outcome.candidates_examined() <= r.baseline.candidates);
        }
        assert_eq!(run.metrics.tpr, Some(1.0));
        assert_eq!(run.metrics.fpr, Some(0.0));
    }

    #[test]
    fn candidate_budget_on_reference_sequence() {
        let spec = SequenceSpec {
            path: SequenceSpec::reference(1).path[..60].to_vec(),
            ..SequenceSpec::reference(1)
        };
        let config = TrackerConfig::default();
        let (frames, _) = gen_sequence(&spec).unwrap();
        let steps = run_tracker(&frames, spec.start, config).unwrap();
        let valid = (spec.width - 2 * config.half) * (spec.height - 2 * config.half);
        for (_, outcome, _) in &steps {
            let r = outcome.layer_reached();
            assert!(outcome.candidates_examined() <= 1 + 4 * r * (r + 1));
            if outcome.is_found() && (2 * r * config.stride + 1).pow(2) < valid {
                assert!(outcome.candidates_examined() < valid);
            }
        }
    }

    #[test]
    fn spec_parsing() {
        let spec = SequenceSpec::parse(
            "width = 100\nheight = 80\npath = 3:2,0; 2:0,0\nnoise_sigma = 0\nobject = checkerboard\ncell = 2\n",
        )
        .unwrap();
        assert_eq!(spec.path, vec![(2, 0), (2, 0), (2, 0), (0, 0), (0, 0)]);
        assert_eq!(spec.start, PatchCenter::new(50, 40));
        assert!(matches!(spec.object, ObjectAppearance::Checkerboard { cell: 2, .. }));

        let random = SequenceSpec::parse("seed = 9\nsteps = 50\n").unwrap();
        assert_eq!(random.path.len(), 50);
        assert_eq!(random, SequenceSpec::parse("seed = 9\nsteps = 50\n").unwrap());

        assert!(matches!(
            SequenceSpec::parse("colour = red"),
            Err(BenchError::Config(ConfigError::UnknownKey(k))) if k == "colour"
        ));
        assert!(SequenceSpec::parse("path = 3:2").is_err());
    }

    #[test]
    fn reference_paths_stay_bounded() {
        for seed in 0..10 {
            let spec = SequenceSpec::reference(seed);
            assert_eq!(spec.frame_count(), 200);
            assert!(spec.path.iter().all(|&(dx, dy)| dx.abs().max(dy.abs()) <= 2));
            assert!(spec.path[..20].iter().all(|&v| v == (0, 0)));
            assert!(spec.path.iter().any(|&v| v != (0, 0)));
            gen_sequence(&spec).unwrap();
        }
    }

    #[test]
    fn ground_truth_csv() {
        let (_, truth) = gen_sequence(&small_spec(vec![(0, -2)], 0.0)).unwrap();
        assert_eq!(
            truth.to_csv(),
            "seq,true_x,true_y,true_direction\n0,30,30,Stationary\n1,30,28,Top\n"
        );
    }

    #[test]
    fn bfs_found_score_exceeds_threshold_on_noise() {
        let spec = small_spec(vec![(1, 0); 5], 0.05);
        let (frames, _) = gen_sequence(&spec).unwrap();
        let config = TrackerConfig {
            half: 8,
            ..TrackerConfig::default()
        };
        let state = TrackerState::new(&frames[0], spec.start, config).unwrap();
        for f in &frames[1..] {
            if let SearchOutcome::Found { score, .. } = bfs_search(&state, f).unwrap() {
                assert!(score > config.threshold);
            }
        }
    }

    fn directions() -> impl Strategy<Value = Direction> {
        prop::sample::select(vec![
            Direction::Top,
            Direction::Bottom,
            Direction::Left,
            Direction::Right,
            Direction::Stationary,
        ])
    }

    proptest! {
        #[test]
        fn metrics_are_permutation_covariant(
            pairs in prop::collection::vec((directions(), directions()), 1..40),
            seed in any::<u64>(),
        ) {
            let (pred, truth): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            let base = eval_directions(&pred, &truth).unwrap();
            let mut idx: Vec<usize> = (0..pairs.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.random_range(0..=i));
            }
            let sp: Vec<_> = idx.iter().map(|&i| pred[i]).collect();
            let st: Vec<_> = idx.iter().map(|&i| truth[i]).collect();
            prop_assert_eq!(eval_directions(&sp, &st).unwrap(), base);

            // shuffling predictions alone never beats a perfect predictor
            let shuffled = eval_directions(&sp, &truth).unwrap();
            let perfect = eval_directions(&truth, &truth).unwrap();
            if let (Some(s), Some(p)) = (shuffled.tpr, perfect.tpr) {
                prop_assert!(s <= p);
                prop_assert!((0.0..=1.0).contains(&s));
            }
            if let Some(f) = shuffled.fpr {
                prop_assert!((0.0..=1.0).contains(&f));
            }
        }
    }
}
