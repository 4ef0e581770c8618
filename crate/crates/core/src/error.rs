use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("volume '{id}' is constant (std = 0), cannot z-score normalize")]
    ConstantVolume { id: String },

    #[error("shape mismatch in {context}: {a:?} vs {b:?}")]
    ShapeMismatch {
        context: String,
        a: Vec<usize>,
        b: Vec<usize>,
    },

    #[error("mask '{id}' has no positive voxels")]
    EmptyMask { id: String },

    #[error("box {min:?}..{max:?} out of bounds for shape {shape:?}")]
    BoxOutOfBounds {
        min: [usize; 3],
        max: [usize; 3],
        shape: [usize; 3],
    },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("phantom spec infeasible: {0}")]
    InfeasibleSpec(String),

    #[error("degenerate input for statistic: {0}")]
    DegenerateInput(String),

    #[error("need at least {need} values, got {got}")]
    TooFewValues { need: usize, got: usize },

    #[error("paired sequences differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },

    #[error("mean pre-contrast intensity over FGT is not positive ({0})")]
    NonPositiveBaseline(f64),

    #[error("case '{0}' missing from {1}")]
    MissingCase(String, String),

    #[error("need at least {k} cases for {k}-fold cross-validation, got {n}")]
    TooFewCases { k: usize, n: usize },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("NIfTI error on {path}: {message}")]
    Nifti { path: String, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
