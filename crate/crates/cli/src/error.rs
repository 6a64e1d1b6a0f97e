use std::fmt;

use uvk_core::bench::BenchError;
use uvk_core::config::ConfigError;
use uvk_core::conv::ConvError;
use uvk_core::frame::FrameError;
use uvk_core::opcount::OpCountError;
use uvk_core::pipeline::PipelineError;
use uvk_core::predictor::PredictorError;

#[derive(Debug)]
pub enum CliError {
    Property(String),
    Usage(String),
    Io(String),
    Domain(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Property(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Domain(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Property(m) | CliError::Usage(m) | CliError::Io(m) | CliError::Domain(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<FrameError> for CliError {
    fn from(e: FrameError) -> Self {
        match e {
            FrameError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<PredictorError> for CliError {
    fn from(e: PredictorError) -> Self {
        match e {
            PredictorError::Config(c) => c.into(),
            PredictorError::Frame(f) => f.into(),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Config(c) => c.into(),
            BenchError::Frame(f) => f.into(),
            BenchError::Predictor(p) => p.into(),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<OpCountError> for CliError {
    fn from(e: OpCountError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<ConvError> for CliError {
    fn from(e: ConvError) -> Self {
        match e {
            ConvError::Io(_) => CliError::Io(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::NoWorkers | PipelineError::ZeroCapacity => CliError::Usage(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}
