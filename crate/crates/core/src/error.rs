use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    Numerical(String),

    #[error("degenerate normal (|grad f| = {0:e}) at a medial-axis point")]
    DegenerateNormal(f64),

    #[error("ray origin is inside the geometry (f = {0})")]
    InsideStart(f64),

    #[error("grazing hit: |grad f . d| = {0:e}")]
    GrazingHit(f64),

    #[error("screen Jacobian is rank deficient")]
    RankDeficient,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("optimization diverged at iteration {0}")]
    DivergenceDetected(usize),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
