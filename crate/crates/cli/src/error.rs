use pcnic::entropy::EntropyError;
use pcnic::kitti::KittiError;
use pcnic::metrics::MetricsError;
use pcnic::net::NetError;
use pcnic::TensorError;

/// Failure classes with stable exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0:#}")]
    Data(anyhow::Error),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Numeric(_) => 3,
        }
    }

    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        Self::Data(e.into())
    }

    /// Adds a context line to data errors.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            Self::Data(e) => Self::Data(e.context(what.to_string())),
            other => other,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::NonFinite { .. } | NetError::Tensor(TensorError::NonFinite { .. }) => Self::Numeric(e.to_string()),
            NetError::Config(m) => Self::Usage(format!("invalid configuration: {m}")),
            other => Self::data(other),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Net(n) => n.into(),
            other => Self::data(other),
        }
    }
}

impl From<KittiError> for CliError {
    fn from(e: KittiError) -> Self {
        Self::data(e)
    }
}

impl From<EntropyError> for CliError {
    fn from(e: EntropyError) -> Self {
        Self::data(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e)
    }
}
