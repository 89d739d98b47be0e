use thiserror::Error;

/// Errors raised across the simulation and reduction pipeline.
#[derive(Debug, Error)]
pub enum SktError {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular equilibrium: gamma11*gamma22 - gamma12*gamma21 = 0")]
    SingularEquilibrium,

    #[error("dimension mismatch: expected {expected}, got {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("linear solve failed: {0}")]
    SingularSystem(String),

    #[error("divergence at t = {t}: non-finite state")]
    Divergence { t: f64 },

    #[error("rank request {requested} exceeds matrix dimensions {rows}x{cols}")]
    RankTooLarge {
        requested: usize,
        rows: usize,
        cols: usize,
    },

    #[error("non-positive density {value} at node {node} of species {species}")]
    NonPositiveDensity {
        species: usize,
        node: usize,
        value: f64,
    },

    #[error("zero norm in relative error at sample {0}")]
    ZeroNorm(usize),

    #[error("requested time {requested} outside trajectory range [{start}, {end}]")]
    TimeOutOfRange { requested: f64, start: f64, end: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<SktError>,
    },
}

impl SktError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        if let SktError::Stage { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            SktError::SingularSystem(_)
                | SktError::Divergence { .. }
                | SktError::SingularEquilibrium
                | SktError::NonPositiveDensity { .. }
                | SktError::ZeroNorm(_)
        )
    }
}

/// Attach a pipeline stage label to an error.
pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ SktError::Config(_) => e,
            e => SktError::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}

pub type Result<T> = std::result::Result<T, SktError>;

pub(crate) fn check_len(expected: usize, found: usize, context: &'static str) -> Result<()> {
    if expected != found {
        return Err(SktError::DimensionMismatch {
            expected,
            found,
            context,
        });
    }
    Ok(())
}
