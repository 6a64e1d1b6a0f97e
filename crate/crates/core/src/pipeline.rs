//! Bounded multi-worker frame pipeline with in-order delivery.
//!
//! One producer submits frames into a bounded queue, `W` workers apply a
//! shared stage function, and the consumer receives results re-sequenced into
//! submission order. Submissions block (or report [`SubmitError::WouldBlock`])
//! rather than drop frames when the queue is full. Jobs accepted but not yet
//! delivered are capped at `2 * queue_capacity + workers`, which bounds the
//! reorder buffer as well.

use std::collections::{BTreeMap, VecDeque};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::frame::Frame;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PipelineError {
    #[error("pipeline needs at least one worker")]
    NoWorkers,
    #[error("queue capacity must be >= 1")]
    ZeroCapacity,
    #[error("failed to spawn worker: {0}")]
    SpawnFailure(String),
    #[error("pipeline is closed and fully drained")]
    Drained,
    #[error("timed out waiting for a result")]
    Timeout,
    #[error("worker {0} panicked")]
    WorkerPanicked(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubmitError {
    #[error("queue is full")]
    WouldBlock,
    #[error("pipeline is closed")]
    Closed,
}

#[derive(Debug, Clone)]
pub struct Job {
    pub seq: u64,
    pub frame: Frame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult<T> {
    pub seq: u64,
    pub payload: T,
    pub worker_id: usize,
    /// Seconds from submission to completion.
    pub latency: f64,
}

type Stage<T> = Arc<dyn Fn(&Job) -> T + Send + Sync>;

pub struct PipelineConfig<T> {
    pub workers: usize,
    pub queue_capacity: usize,
    pub stage: Stage<T>,
}

impl<T> PipelineConfig<T> {
    pub fn new(workers: usize, queue_capacity: usize, stage: impl Fn(&Job) -> T + Send + Sync + 'static) -> Self {
        PipelineConfig {
            workers,
            queue_capacity,
            stage: Arc::new(stage),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub workers: usize,
    pub jobs: u64,
    pub per_worker: Vec<u64>,
    pub wall_seconds: f64,
    pub fps: f64,
    /// Most jobs ever accepted but not yet delivered.
    pub hwm_inflight: usize,
}

impl RunStats {
    pub const CSV_HEADER: &'static str = "workers,jobs,wall_seconds,fps,hwm_inflight";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.3},{}",
            self.workers, self.jobs, self.wall_seconds, self.fps, self.hwm_inflight
        )
    }
}

struct Queued {
    job: Job,
    submitted: Instant,
}

struct State {
    queue: VecDeque<Queued>,
    closed: bool,
    next_seq: u64,
    /// accepted - delivered
    outstanding: usize,
    hwm: usize,
    first_submit: Option<Instant>,
}

struct Shared {
    state: Mutex<State>,
    /// signalled when a job is queued or the pipeline closes
    work_ready: Condvar,
    /// signalled when queue space or outstanding budget frees up
    space_ready: Condvar,
    capacity: usize,
    outstanding_limit: usize,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn has_room(&self, st: &State) -> bool {
        st.queue.len() < self.capacity && st.outstanding < self.outstanding_limit
    }

    fn submit(&self, frame: Frame, block: bool) -> Result<u64, SubmitError> {
        let mut st = self.lock();
        loop {
            if st.closed {
                return Err(SubmitError::Closed);
            }
            if self.has_room(&st) {
                break;
            }
            if !block {
                return Err(SubmitError::WouldBlock);
            }
            st = self.space_ready.wait(st).unwrap_or_else(|e| e.into_inner());
        }
        let seq = st.next_seq;
        st.next_seq += 1;
        st.outstanding += 1;
        st.hwm = st.hwm.max(st.outstanding);
        let now = Instant::now();
        st.first_submit.get_or_insert(now);
        st.queue.push_back(Queued {
            job: Job { seq, frame },
            submitted: now,
        });
        drop(st);
        self.work_ready.notify_one();
        Ok(seq)
    }

    fn close(&self) {
        self.lock().closed = true;
        self.work_ready.notify_all();
        self.space_ready.notify_all();
    }
}

/// Cloneable submission handle for a producer running on another thread.
#[derive(Clone)]
pub struct Producer {
    shared: Arc<Shared>,
}

impl Producer {
    /// Blocks while the queue is full. Returns the assigned sequence number.
    pub fn submit(&self, frame: Frame) -> Result<u64, SubmitError> {
        self.shared.submit(frame, true)
    }

    pub fn try_submit(&self, frame: Frame) -> Result<u64, SubmitError> {
        self.shared.submit(frame, false)
    }

    /// Stops accepting jobs; already accepted jobs still complete.
    pub fn close(&self) {
        self.shared.close();
    }
}

struct Completed<T> {
    result: PipelineResult<T>,
    finished: Instant,
}

pub struct Pipeline<T> {
    shared: Arc<Shared>,
    results: mpsc::Receiver<Completed<T>>,
    reorder: BTreeMap<u64, PipelineResult<T>>,
    next_out: u64,
    workers: Vec<JoinHandle<u64>>,
    started: Instant,
    last_finish: Option<Instant>,
}

fn worker_loop<T>(id: usize, shared: Arc<Shared>, stage: Stage<T>, tx: mpsc::Sender<Completed<T>>) -> u64 {
    let mut done = 0u64;
    loop {
        let queued = {
            let mut st = shared.lock();
            loop {
                if let Some(q) = st.queue.pop_front() {
                    break Some(q);
                }
                if st.closed {
                    break None;
                }
                st = shared.work_ready.wait(st).unwrap_or_else(|e| e.into_inner());
            }
        };
        let Some(Queued { job, submitted }) = queued else {
            return done;
        };
        shared.space_ready.notify_one();
        let payload = stage(&job);
        let finished = Instant::now();
        done += 1;
        let result = PipelineResult {
            seq: job.seq,
            payload,
            worker_id: id,
            latency: finished.duration_since(submitted).as_secs_f64(),
        };
        if tx.send(Completed { result, finished }).is_err() {
            return done;
        }
    }
}

impl<T: Send + 'static> Pipeline<T> {
    /// Spawns the workers; they start consuming as soon as jobs arrive.
    pub fn start(config: PipelineConfig<T>) -> Result<Self, PipelineError> {
        if config.workers == 0 {
            return Err(PipelineError::NoWorkers);
        }
        if config.queue_capacity == 0 {
            return Err(PipelineError::ZeroCapacity);
        }
        let shared = Arc::new(Shared {
            state: Mutex::new(State {
                queue: VecDeque::with_capacity(config.queue_capacity),
                closed: false,
                next_seq: 0,
                outstanding: 0,
                hwm: 0,
                first_submit: None,
            }),
            work_ready: Condvar::new(),
            space_ready: Condvar::new(),
            capacity: config.queue_capacity,
            outstanding_limit: 2 * config.queue_capacity + config.workers,
        });
        let (tx, results) = mpsc::channel();
        let mut workers = Vec::with_capacity(config.workers);
        for id in 0..config.workers {
            let (worker_shared, stage, tx) = (Arc::clone(&shared), Arc::clone(&config.stage), tx.clone());
            let spawned = thread::Builder::new()
                .name(format!("uvk-worker-{id}"))
                .spawn(move || worker_loop(id, worker_shared, stage, tx));
            match spawned {
                Ok(handle) => workers.push(handle),
                Err(e) => {
                    shared.close();
                    for w in workers {
                        let _ = w.join();
                    }
                    return Err(PipelineError::SpawnFailure(e.to_string()));
                }
            }
        }
        Ok(Pipeline {
            shared,
            results,
            reorder: BTreeMap::new(),
            next_out: 0,
            workers,
            started: Instant::now(),
            last_finish: None,
        })
    }

    pub fn producer(&self) -> Producer {
        Producer {
            shared: Arc::clone(&self.shared),
        }
    }

    pub fn submit(&self, frame: Frame) -> Result<u64, SubmitError> {
        self.shared.submit(frame, true)
    }

    pub fn try_submit(&self, frame: Frame) -> Result<u64, SubmitError> {
        self.shared.submit(frame, false)
    }

    pub fn close(&self) {
        self.shared.close();
    }

    /// Accepted jobs not yet handed to the consumer.
    pub fn outstanding(&self) -> usize {
        self.shared.lock().outstanding
    }

    pub fn high_water_mark(&self) -> usize {
        self.shared.lock().hwm
    }

    pub fn workers(&self) -> usize {
        self.workers.len()
    }

    fn deliver(&mut self) -> Option<PipelineResult<T>> {
        let result = self.reorder.remove(&self.next_out)?;
        self.next_out += 1;
        self.shared.lock().outstanding -= 1;
        self.shared.space_ready.notify_one();
        Some(result)
    }

    fn absorb(&mut self, completed: Completed<T>) {
        self.last_finish = Some(
            self.last_finish
                .map_or(completed.finished, |t| t.max(completed.finished)),
        );
        self.reorder.insert(completed.result.seq, completed.result);
    }

    fn drained(&self) -> bool {
        let st = self.shared.lock();
        st.closed && self.next_out == st.next_seq
    }

    /// Next result in sequence order, waiting up to `timeout` (forever when `None`).
    pub fn next_result_timeout(&mut self, timeout: Option<Duration>) -> Result<PipelineResult<T>, PipelineError> {
        let deadline = timeout.map(|t| Instant::now() + t);
        loop {
            if let Some(r) = self.deliver() {
                return Ok(r);
            }
            if self.drained() {
                return Err(PipelineError::Drained);
            }
            // poll so that a close() from the producer side is noticed while waiting
            let slice = Duration::from_millis(20);
            let wait = match deadline {
                Some(d) => {
                    let now = Instant::now();
                    if now >= d {
                        return Err(PipelineError::Timeout);
                    }
                    slice.min(d - now)
                }
                None => slice,
            };
            match self.results.recv_timeout(wait) {
                Ok(c) => self.absorb(c),
                Err(mpsc::RecvTimeoutError::Timeout) => {}
                Err(mpsc::RecvTimeoutError::Disconnected) => {
                    return Err(PipelineError::Drained);
                }
            }
        }
    }

    /// Blocks until the next in-order result is available.
    pub fn next_result(&mut self) -> Result<PipelineResult<T>, PipelineError> {
        self.next_result_timeout(None)
    }

    pub fn try_next_result(&mut self) -> Option<PipelineResult<T>> {
        while let Ok(c) = self.results.try_recv() {
            self.absorb(c);
        }
        self.deliver()
    }

    /// Closes the queue, lets every accepted job finish and joins the workers.
    /// Results not yet consumed are returned in sequence order.
    pub fn shutdown(mut self) -> Result<(RunStats, Vec<PipelineResult<T>>), PipelineError> {
        self.shared.close();
        let mut per_worker = Vec::with_capacity(self.workers.len());
        let mut panicked = None;
        for (id, handle) in std::mem::take(&mut self.workers).into_iter().enumerate() {
            match handle.join() {
                Ok(n) => per_worker.push(n),
                Err(_) => {
                    per_worker.push(0);
                    panicked.get_or_insert(id);
                }
            }
        }
        if let Some(id) = panicked {
            return Err(PipelineError::WorkerPanicked(id));
        }
        while let Ok(c) = self.results.try_recv() {
            self.absorb(c);
        }
        let mut remaining = Vec::with_capacity(self.reorder.len());
        while let Some(r) = self.deliver() {
            remaining.push(r);
        }
        let st = self.shared.lock();
        let begin = st.first_submit.unwrap_or(self.started);
        let end = self.last_finish.unwrap_or(begin);
        let wall_seconds = end.saturating_duration_since(begin).as_secs_f64();
        let jobs = per_worker.iter().sum();
        let stats = RunStats {
            workers: per_worker.len(),
            jobs,
            per_worker,
            wall_seconds,
            fps: if wall_seconds > 0.0 {
                jobs as f64 / wall_seconds
            } else {
                0.0
            },
            hwm_inflight: st.hwm,
        };
        drop(st);
        Ok((stats, remaining))
    }
}

impl<T> Drop for Pipeline<T> {
    fn drop(&mut self) {
        self.shared.close();
        for handle in self.workers.drain(..) {
            let _ = handle.join();
        }
    }
}

/// Fixed amount of CPU work: `rounds` blocks of 1000 multiply-adds.
pub fn spin_work(rounds: u64) -> u64 {
    let mut acc = 0u64;
    for _ in 0..rounds {
        for i in 0..1000u64 {
            acc = acc.wrapping_mul(6364136223846793005).wrapping_add(i);
        }
    }
    std::hint::black_box(acc)
}

/// Number of [`spin_work`] rounds that take about `duration` on one thread.
/// Calibrating once keeps the stage cost fixed in work rather than wall time,
/// so time-sliced workers on a single core do not look parallel.
pub fn calibrate_spin(duration: Duration) -> u64 {
    let probe = 200;
    let t = Instant::now();
    let mut reps = 0u64;
    while t.elapsed() < Duration::from_millis(50) {
        spin_work(probe);
        reps += 1;
    }
    let per_round = t.elapsed().as_secs_f64() / (reps * probe) as f64;
    ((duration.as_secs_f64() / per_round).round() as u64).max(1)
}

/// Runs `frames` jobs whose stage is `spin_work(rounds)` on `workers` workers,
/// fed from a separate producer thread.
pub fn measure_throughput(
    workers: usize,
    frames: usize,
    rounds: u64,
    queue_capacity: usize,
) -> Result<RunStats, PipelineError> {
    let frame = Frame::uniform(8, 8, 0.5, 0).expect("valid frame");
    let mut pipeline = Pipeline::start(PipelineConfig::new(workers, queue_capacity, move |_job: &Job| {
        spin_work(rounds)
    }))?;
    let producer = pipeline.producer();
    let feeder = thread::spawn(move || {
        for i in 0..frames {
            if producer.submit(frame.clone().with_seq(i as u64)).is_err() {
                break;
            }
        }
        producer.close();
    });
    let mut received = 0usize;
    while received < frames {
        match pipeline.next_result() {
            Ok(_) => received += 1,
            Err(PipelineError::Drained) => break,
            Err(e) => return Err(e),
        }
    }
    feeder
        .join()
        .map_err(|_| PipelineError::SpawnFailure("feeder panicked".into()))?;
    pipeline.shutdown().map(|(stats, _)| stats)
}
