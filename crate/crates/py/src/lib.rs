//! Python module `uvk`: frames and correlation, the direction tracker,
//! convolution kernels, operation budgets, benchmarks and the frame pipeline.

use std::sync::Arc;
use std::time::Duration;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use uvk_core::bench::{self, BenchError, SequenceSpec};
use uvk_core::conv::{self, ConvError};
use uvk_core::frame::{self, FrameError, PatchCenter};
use uvk_core::opcount::{self, ConvMode, ConvSpec, NetSpec, PowerParams};
use uvk_core::pipeline::{self, Job, PipelineError};
use uvk_core::predictor::{self, PredictorError, SearchOutcome};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn frame_err(e: FrameError) -> PyErr {
    match e {
        FrameError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn predictor_err(e: PredictorError) -> PyErr {
    match e {
        PredictorError::Frame(f) => frame_err(f),
        other => value_err(other),
    }
}

fn bench_err(e: BenchError) -> PyErr {
    match e {
        BenchError::Frame(f) => frame_err(f),
        other => value_err(other),
    }
}

fn conv_err(e: ConvError) -> PyErr {
    match e {
        ConvError::Io(_) => PyOSError::new_err(e.to_string()),
        other => value_err(other),
    }
}

/// Grayscale frame with luminance in [0, 1], stored row-major.
#[pyclass(name = "Frame", module = "uvk", from_py_object)]
#[derive(Clone)]
pub struct PyFrame {
    inner: frame::Frame,
}

#[pymethods]
impl PyFrame {
    #[new]
    #[pyo3(signature = (width, height, pixels, seq = 0))]
    fn new(width: usize, height: usize, pixels: Vec<f64>, seq: u64) -> PyResult<Self> {
        frame::Frame::new(width, height, pixels, seq)
            .map(|inner| PyFrame { inner })
            .map_err(frame_err)
    }

    #[staticmethod]
    #[pyo3(signature = (width, height, value, seq = 0))]
    fn uniform(width: usize, height: usize, value: f64, seq: u64) -> PyResult<Self> {
        frame::Frame::uniform(width, height, value, seq)
            .map(|inner| PyFrame { inner })
            .map_err(frame_err)
    }

    #[staticmethod]
    fn read_pgm(path: &str) -> PyResult<Self> {
        frame::read_frame_pgm(path)
            .map(|inner| PyFrame { inner })
            .map_err(frame_err)
    }

    fn write_pgm(&self, path: &str) -> PyResult<()> {
        frame::write_frame_pgm(&self.inner, path).map_err(frame_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn seq(&self) -> u64 {
        self.inner.seq()
    }

    fn pixels(&self) -> Vec<f64> {
        self.inner.pixels().to_vec()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<f64> {
        if x >= self.inner.width() || y >= self.inner.height() {
            return Err(value_err(format!("pixel ({x}, {y}) outside the frame")));
        }
        Ok(self.inner.get(x, y))
    }

    fn __repr__(&self) -> String {
        format!(
            "Frame(width={}, height={}, seq={})",
            self.inner.width(),
            self.inner.height(),
            self.inner.seq()
        )
    }
}

/// Square patch cut from a frame.
#[pyclass(name = "Patch", module = "uvk", frozen)]
pub struct PyPatch {
    inner: Arc<frame::Patch>,
}

#[pymethods]
impl PyPatch {
    #[getter]
    fn center(&self) -> (i64, i64) {
        let c = self.inner.center();
        (c.x, c.y)
    }

    #[getter]
    fn half(&self) -> usize {
        self.inner.half()
    }

    fn pixels(&self) -> Vec<f64> {
        self.inner.pixels().to_vec()
    }
}

#[pyfunction]
fn extract_patch(frame: &PyFrame, x: i64, y: i64, half: usize) -> PyResult<PyPatch> {
    frame::extract_patch(&frame.inner, PatchCenter::new(x, y), half)
        .map(|p| PyPatch { inner: Arc::new(p) })
        .map_err(frame_err)
}

/// Zero-mean normalized cross-correlation of two equally sized patches.
#[pyfunction]
fn correlation(a: &PyPatch, b: &PyPatch) -> PyResult<f64> {
    frame::correlation(&a.inner, &b.inner).map_err(frame_err)
}

#[pyclass(name = "TrackerConfig", module = "uvk", skip_from_py_object)]
#[derive(Clone)]
pub struct PyTrackerConfig {
    inner: predictor::TrackerConfig,
}

#[pymethods]
impl PyTrackerConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = predictor::TrackerConfig::default();
        if let Some(kwargs) = kwargs {
            for (k, v) in kwargs.iter() {
                let key: String = k.extract()?;
                let value = v.str()?.to_string();
                inner.set(&key, &value).map_err(value_err)?;
            }
        }
        inner.validate().map_err(value_err)?;
        Ok(PyTrackerConfig { inner })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        predictor::TrackerConfig::parse(text)
            .map(|inner| PyTrackerConfig { inner })
            .map_err(value_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn as_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = &self.inner;
        let d = PyDict::new(py);
        d.set_item("alpha", c.alpha)?;
        d.set_item("beta", c.beta)?;
        d.set_item("threshold", c.threshold)?;
        d.set_item("half", c.half)?;
        d.set_item("stride", c.stride)?;
        d.set_item("max_radius", c.max_radius)?;
        d.set_item("dead_zone", c.dead_zone)?;
        Ok(d)
    }
}

fn outcome_dict<'py>(py: Python<'py>, direction: &str, outcome: &SearchOutcome) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("direction", direction)?;
    d.set_item("found", outcome.is_found())?;
    match *outcome {
        SearchOutcome::Found { center, score, .. } => {
            d.set_item("p", center.x)?;
            d.set_item("q", center.y)?;
            d.set_item("score", score)?;
        }
        SearchOutcome::NotFound { best_score, .. } => {
            d.set_item("p", py.None())?;
            d.set_item("q", py.None())?;
            d.set_item("score", best_score)?;
        }
    }
    d.set_item("layer_reached", outcome.layer_reached())?;
    d.set_item("candidates_examined", outcome.candidates_examined())?;
    Ok(d)
}

/// Direction predictor state: the smoothed center and the reference template.
#[pyclass(name = "Tracker", module = "uvk")]
pub struct PyTracker {
    state: predictor::TrackerState,
}

#[pymethods]
impl PyTracker {
    #[new]
    #[pyo3(signature = (frame, x, y, config = None))]
    fn new(frame: &PyFrame, x: i64, y: i64, config: Option<&PyTrackerConfig>) -> PyResult<Self> {
        let config = config.map(|c| c.inner).unwrap_or_default();
        predictor::TrackerState::new(&frame.inner, PatchCenter::new(x, y), config)
            .map(|state| PyTracker { state })
            .map_err(predictor_err)
    }

    #[getter]
    fn x0(&self) -> f64 {
        self.state.x0
    }

    #[getter]
    fn y0(&self) -> f64 {
        self.state.y0
    }

    /// Advances by one frame and returns the step as a dict.
    fn step<'py>(&mut self, py: Python<'py>, frame: &PyFrame) -> PyResult<Bound<'py, PyDict>> {
        let step = predictor::track_step(&self.state, &frame.inner).map_err(predictor_err)?;
        self.state = step.state;
        outcome_dict(py, step.direction.as_str(), &step.outcome)
    }
}

#[pyfunction]
#[pyo3(signature = (dx, dy, dead_zone = 0.5))]
fn quantize_direction(dx: f64, dy: f64, dead_zone: f64) -> &'static str {
    predictor::quantize_direction(dx, dy, dead_zone).as_str()
}

/// H×W×C tensor in channel-minor order.
#[pyclass(name = "Tensor3", module = "uvk", skip_from_py_object)]
#[derive(Clone)]
pub struct PyTensor3 {
    inner: conv::Tensor3,
}

#[pymethods]
impl PyTensor3 {
    #[new]
    fn new(h: usize, w: usize, c: usize, data: Vec<f64>) -> PyResult<Self> {
        conv::Tensor3::new(h, w, c, data)
            .map(|inner| PyTensor3 { inner })
            .map_err(conv_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.h(), self.inner.w(), self.inner.c())
    }

    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn max_abs_diff(&self, other: &PyTensor3) -> f64 {
        self.inner.max_abs_diff(&other.inner)
    }
}

/// Standard convolution with an Lk×Lk×M×N kernel; returns `(output, macs)`.
#[pyfunction]
fn conv2d_standard(input: &PyTensor3, lk: usize, m: usize, n: usize, kernel: Vec<f64>) -> PyResult<(PyTensor3, u64)> {
    let k = conv::Kernel4::new(lk, m, n, kernel).map_err(conv_err)?;
    let out = conv::conv2d_standard(&input.inner, &k).map_err(conv_err)?;
    Ok((PyTensor3 { inner: out.tensor }, out.macs))
}

/// Depthwise (Lk×Lk×M) then pointwise (M×N) convolution; returns `(output, macs)`.
#[pyfunction]
fn separable_conv(
    input: &PyTensor3,
    lk: usize,
    depthwise: Vec<f64>,
    n: usize,
    pointwise: Vec<f64>,
) -> PyResult<(PyTensor3, u64)> {
    let m = input.inner.c();
    let dk = conv::DepthwiseKernel::new(lk, m, depthwise).map_err(conv_err)?;
    let pk = conv::PointwiseKernel::new(m, n, pointwise).map_err(conv_err)?;
    let out = conv::separable_conv(&input.inner, &dk, &pk).map_err(conv_err)?;
    Ok((PyTensor3 { inner: out.tensor }, out.macs))
}

/// Flattened Lk×Lk×M×N kernel equivalent to a depthwise/pointwise pair.
#[pyfunction]
fn compose_separable_kernel(
    lk: usize,
    m: usize,
    depthwise: Vec<f64>,
    n: usize,
    pointwise: Vec<f64>,
) -> PyResult<Vec<f64>> {
    let dk = conv::DepthwiseKernel::new(lk, m, depthwise).map_err(conv_err)?;
    let pk = conv::PointwiseKernel::new(m, n, pointwise).map_err(conv_err)?;
    Ok(conv::compose_separable_kernel(&dk, &pk)
        .map_err(conv_err)?
        .data()
        .to_vec())
}

#[pyfunction]
#[pyo3(signature = (seed = 0, trials = 100))]
fn conv_self_check<'py>(py: Python<'py>, seed: u64, trials: usize) -> PyResult<Vec<Bound<'py, PyDict>>> {
    conv::self_check(seed, trials)
        .into_iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("name", c.name)?;
            d.set_item("passed", c.passed)?;
            d.set_item("trials", c.trials)?;
            d.set_item("max_abs_diff", c.max_abs_diff)?;
            d.set_item("detail", c.detail)?;
            Ok(d)
        })
        .collect()
}

fn spec(lk: u64, m: u64, n: u64, lf: u64) -> PyResult<ConvSpec> {
    ConvSpec::standard(lk, m, n, lf).map_err(value_err)
}

#[pyfunction]
fn ops_standard(lk: u64, m: u64, n: u64, lf: u64) -> PyResult<u64> {
    opcount::ops_standard(&spec(lk, m, n, lf)?).map_err(value_err)
}

/// `(depthwise, pointwise, total)` operation counts.
#[pyfunction]
fn ops_separable(lk: u64, m: u64, n: u64, lf: u64) -> PyResult<(u64, u64, u64)> {
    let s = opcount::ops_separable(&spec(lk, m, n, lf)?).map_err(value_err)?;
    Ok((s.depthwise, s.pointwise, s.total))
}

/// Separable/standard operation ratio as a reduced `(numerator, denominator)`.
#[pyfunction]
fn reduction_ratio(lk: u64, m: u64, n: u64, lf: u64) -> PyResult<(u128, u128)> {
    let r = opcount::reduction_ratio(&spec(lk, m, n, lf)?).map_err(value_err)?;
    Ok((*r.numer(), *r.denom()))
}

/// `(standard, separable)` weight counts of one layer.
#[pyfunction]
fn layer_params(lk: u64, m: u64, n: u64) -> PyResult<(u64, u64)> {
    let s = spec(lk, m, n, 1)?;
    Ok((
        opcount::params_standard(&s).map_err(value_err)?,
        opcount::params_separable(&s).map_err(value_err)?,
    ))
}

#[pyfunction]
fn power(f_o: f64, n_ops: f64, e_o: f64) -> PyResult<f64> {
    Ok(opcount::power(&PowerParams::new(f_o, n_ops, e_o).map_err(value_err)?))
}

/// Power and memory budget of a network description (`mode lk m n lf` lines).
#[pyfunction]
#[pyo3(signature = (net, f_o, e_o, battery_w, ram_bytes, n_ops = None))]
fn budget<'py>(
    py: Python<'py>,
    net: &str,
    f_o: f64,
    e_o: f64,
    battery_w: f64,
    ram_bytes: u64,
    n_ops: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let net = NetSpec::parse(net).map_err(value_err)?;
    let ops = match n_ops {
        Some(v) => v,
        None => net.total_ops().map_err(value_err)? as f64,
    };
    let params = PowerParams::new(f_o, ops, e_o).map_err(value_err)?;
    let r = opcount::budget_report(&params, battery_w, &net, ram_bytes).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("p_w", r.p_w)?;
    d.set_item("battery_fraction", r.battery_fraction)?;
    d.set_item("model_bytes", r.model_bytes)?;
    d.set_item("ram_fraction", r.ram_fraction)?;
    d.set_item("total_params", net.total_params().map_err(value_err)?)?;
    d.set_item("notes", r.notes)?;
    Ok(d)
}

/// `(standard, separable)` parameter totals for `count` identical layers.
#[pyfunction]
fn uniform_net_params(count: usize, lk: u64, channels: u64) -> PyResult<(u64, u64)> {
    let net = NetSpec::uniform(count, lk, channels, 1, ConvMode::Standard).map_err(value_err)?;
    Ok((
        net.total_params().map_err(value_err)?,
        net.with_mode(ConvMode::Separable).total_params().map_err(value_err)?,
    ))
}

fn sequence_spec(spec: Option<&str>, seed: u64) -> PyResult<SequenceSpec> {
    match spec {
        Some(text) => SequenceSpec::parse(text).map_err(bench_err),
        None => Ok(SequenceSpec::reference(seed)),
    }
}

type TruthRow = (i64, i64, &'static str);

/// Generates a synthetic sequence; returns `(frames, truth)` where truth holds
/// `(x, y, direction)` per frame. Without a spec text the reference setup is used.
#[pyfunction]
#[pyo3(signature = (spec = None, seed = 0))]
fn generate_sequence(spec: Option<&str>, seed: u64) -> PyResult<(Vec<PyFrame>, Vec<TruthRow>)> {
    let spec = sequence_spec(spec, seed)?;
    let (frames, truth) = bench::gen_sequence(&spec).map_err(bench_err)?;
    let truth = truth
        .centers
        .iter()
        .zip(&truth.directions)
        .map(|(c, d)| (c.x, c.y, d.as_str()))
        .collect();
    Ok((frames.into_iter().map(|inner| PyFrame { inner }).collect(), truth))
}

/// Global NCC argmax over every valid center: `(x, y, score, candidates)`.
#[pyfunction]
fn exhaustive_search(template: &PyPatch, frame: &PyFrame) -> PyResult<(i64, i64, f64, usize)> {
    let m = bench::exhaustive_search(&template.inner, &frame.inner).map_err(bench_err)?;
    Ok((m.center.x, m.center.y, m.score, m.candidates))
}

/// Predictor versus exhaustive search on a generated sequence.
#[pyfunction]
#[pyo3(signature = (spec = None, seed = 0, reps = 3, config = None))]
fn run_benchmark<'py>(
    py: Python<'py>,
    spec: Option<&str>,
    seed: u64,
    reps: usize,
    config: Option<&PyTrackerConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = sequence_spec(spec, seed)?;
    let config = config.map(|c| c.inner).unwrap_or_default();
    let run = py
        .detach(|| bench::run_benchmark(&spec, &config, reps))
        .map_err(bench_err)?;
    let m = &run.metrics;
    let d = PyDict::new(py);
    d.set_item("tpr", m.tpr)?;
    d.set_item("fpr", m.fpr)?;
    d.set_item("fps_predictor", m.fps_predictor)?;
    d.set_item("fps_baseline", m.fps_baseline)?;
    d.set_item("speedup", m.speedup)?;
    d.set_item("candidates_predictor", m.candidates_predictor)?;
    d.set_item("candidates_baseline", m.candidates_baseline)?;
    Ok(d)
}

/// Exhaustive search of every frame on `workers` pipeline workers; results
/// come back in frame order as `(seq, x, y, score)`.
#[pyfunction]
#[pyo3(signature = (template, frames, workers = 2, capacity = 8))]
fn parallel_search(
    py: Python<'_>,
    template: &PyPatch,
    frames: Vec<PyFrame>,
    workers: usize,
    capacity: usize,
) -> PyResult<Vec<(u64, i64, i64, f64)>> {
    let template = Arc::clone(&template.inner);
    py.detach(move || {
        let stage = move |job: &Job| bench::exhaustive_search(&template, &job.frame).map_err(|e| e.to_string());
        let mut pipe =
            pipeline::Pipeline::start(pipeline::PipelineConfig::new(workers, capacity, stage)).map_err(value_err)?;
        let producer = pipe.producer();
        let feeder = std::thread::spawn(move || {
            for f in frames {
                if producer.submit(f.inner).is_err() {
                    break;
                }
            }
            producer.close();
        });
        let mut out = Vec::new();
        let result = loop {
            match pipe.next_result() {
                Ok(r) => match r.payload {
                    Ok(m) => out.push((r.seq, m.center.x, m.center.y, m.score)),
                    Err(e) => break Err(value_err(e)),
                },
                Err(PipelineError::Drained) => break Ok(()),
                Err(e) => break Err(value_err(e)),
            }
        };
        pipe.close();
        let _ = feeder.join();
        pipe.shutdown().map_err(value_err)?;
        result.map(|()| out)
    })
}

/// Throughput of a CPU-bound stage of about `stage_ms` single-thread cost.
#[pyfunction]
#[pyo3(signature = (workers, frames, stage_ms = 10.0, capacity = 8))]
fn measure_throughput<'py>(
    py: Python<'py>,
    workers: usize,
    frames: usize,
    stage_ms: f64,
    capacity: usize,
) -> PyResult<Bound<'py, PyDict>> {
    if !(stage_ms.is_finite() && stage_ms > 0.0) {
        return Err(value_err("stage_ms must be positive"));
    }
    let stats = py
        .detach(|| {
            let rounds = pipeline::calibrate_spin(Duration::from_secs_f64(stage_ms / 1000.0));
            pipeline::measure_throughput(workers, frames, rounds, capacity)
        })
        .map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("workers", stats.workers)?;
    d.set_item("jobs", stats.jobs)?;
    d.set_item("wall_seconds", stats.wall_seconds)?;
    d.set_item("fps", stats.fps)?;
    d.set_item("hwm_inflight", stats.hwm_inflight)?;
    d.set_item("per_worker", stats.per_worker)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "uvk")]
fn uvk_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFrame>()?;
    m.add_class::<PyPatch>()?;
    m.add_class::<PyTrackerConfig>()?;
    m.add_class::<PyTracker>()?;
    m.add_class::<PyTensor3>()?;
    m.add_function(wrap_pyfunction!(extract_patch, m)?)?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(quantize_direction, m)?)?;
    m.add_function(wrap_pyfunction!(conv2d_standard, m)?)?;
    m.add_function(wrap_pyfunction!(separable_conv, m)?)?;
    m.add_function(wrap_pyfunction!(compose_separable_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(conv_self_check, m)?)?;
    m.add_function(wrap_pyfunction!(ops_standard, m)?)?;
    m.add_function(wrap_pyfunction!(ops_separable, m)?)?;
    m.add_function(wrap_pyfunction!(reduction_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(layer_params, m)?)?;
    m.add_function(wrap_pyfunction!(power, m)?)?;
    m.add_function(wrap_pyfunction!(budget, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_net_params, m)?)?;
    m.add_function(wrap_pyfunction!(generate_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(exhaustive_search, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(parallel_search, m)?)?;
    m.add_function(wrap_pyfunction!(measure_throughput, m)?)?;
    m.add("POWER_NOTE", opcount::POWER_NOTE)?;
    Ok(())
}
