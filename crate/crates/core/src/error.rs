use thiserror::Error;

pub type Result<T, E = EitError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EitError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quantization axis undefined: longitudinal and transverse fields are both zero")]
    DegenerateQuantizationAxis,

    #[error("hamiltonian assembly failed: {0}")]
    Assembly(String),

    #[error("numerical failure in {stage}: {detail}")]
    Numerical { stage: &'static str, detail: String },

    #[error("scan point {index} (delta_p = {delta_p} MHz) failed: {source}")]
    ScanPoint {
        index: usize,
        delta_p: f64,
        #[source]
        source: Box<EitError>,
    },

    #[error("baseline fit failed: {0}")]
    Baseline(String),

    #[error("peak fit did not converge after {iterations} iterations (best residual {best_residual:.3e})")]
    Fit { iterations: usize, best_residual: f64 },

    #[error("ambiguous peak classification for centers {offenders:?} MHz (spacing {spacing} MHz)")]
    Classification { offenders: Vec<f64>, spacing: f64 },

    #[error("locus too sparse: {0}")]
    Resolution(String),

    #[error("spectrum import failed: {0}")]
    Import(String),
}

impl EitError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        EitError::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(stage: &'static str, detail: impl Into<String>) -> Self {
        EitError::Numerical {
            stage,
            detail: detail.into(),
        }
    }
}
