use thiserror::Error;

pub type Result<T> = std::result::Result<T, CimError>;

#[derive(Debug, Error)]
pub enum CimError {
    #[error("integration diverged at step {step}")]
    IntegrationDiverged { step: usize },

    #[error("polar form singular at step {step}: pump magnitude {pump_magnitude:e} below 1e-12")]
    PolarSingularity { step: usize, pump_magnitude: f64 },

    #[error("site {site} diverged at round trip {round_trip} (integration step {step})")]
    SiteDiverged {
        site: usize,
        round_trip: u64,
        step: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("coupling operator is not passive: spectral radius {rho} >= 1")]
    NotPassive { rho: f64 },

    #[error("no oscillation threshold: R_out * rho = {loop_gain} is outside (0, 1]")]
    NoThreshold { loop_gain: f64 },

    #[error("power iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is not circulant")]
    NotCirculant,

    #[error("instance too large for exhaustive search: n = {n}, limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("seed {seed}, stage {stage}: {source}")]
    Stage {
        seed: u64,
        stage: &'static str,
        #[source]
        source: Box<CimError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl CimError {
    /// True for failures of the numerics (divergence, non-convergence) as
    /// opposed to bad input. The CLI maps these to exit code 3.
    pub fn is_numerical(&self) -> bool {
        match self {
            CimError::IntegrationDiverged { .. }
            | CimError::PolarSingularity { .. }
            | CimError::SiteDiverged { .. }
            | CimError::NoConvergence { .. } => true,
            CimError::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn at_stage(self, seed: u64, stage: &'static str) -> CimError {
        CimError::Stage {
            seed,
            stage,
            source: Box::new(self),
        }
    }
}
