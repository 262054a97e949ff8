use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Core(#[from] aodforest::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

impl PipelineError {
    /// Process exit status: 1 usage/config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        use aodforest::Error as E;
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) | PipelineError::Io { .. } => 2,
            PipelineError::Numerical(_) => 3,
            PipelineError::Core(e) => match e {
                E::RankDeficient(_) | E::Singular(_) | E::NonFinite(_) => 3,
                _ => 2,
            },
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<csv::Error> for PipelineError {
    fn from(e: csv::Error) -> Self {
        PipelineError::Core(e.into())
    }
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::Core(e.into())
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Core(e.into())
    }
}
