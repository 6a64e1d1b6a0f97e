//! Direction prediction by layered correlation search, separable convolution
//! kernels, operation and memory budgets, and a threaded frame pipeline.

pub mod bench;
pub mod config;
pub mod conv;
pub mod frame;
pub mod opcount;
pub mod pipeline;
pub mod predictor;

pub use bench::{
    eval_directions, exhaustive_search, gen_sequence, run_benchmark, BenchError, GroundTruth, MetricsReport,
    SequenceSpec,
};
pub use conv::{
    conv2d_standard, depthwise_conv, pointwise_conv, separable_conv, ConvError, ConvOutput, DepthwiseKernel, Kernel4,
    PointwiseKernel, Tensor3,
};
pub use frame::{correlation, extract_patch, Frame, FrameError, Patch, PatchCenter};
pub use opcount::{ops_separable, ops_standard, reduction_ratio, ConvMode, ConvSpec, NetSpec, Rational};
pub use pipeline::{Pipeline, PipelineConfig, PipelineError, PipelineResult, RunStats};
pub use predictor::{
    bfs_search, quantize_direction, track_step, update_center, Direction, SearchOutcome, TrackerConfig, TrackerState,
};
