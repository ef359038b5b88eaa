use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("{0} must be a power of two, got {1}")]
    NotPowerOfTwo(&'static str, usize),

    #[error("matrix not Hermitian positive semidefinite: {0}")]
    NotPsd(String),

    #[error("indefinite matrix: pivot {index} is {value:.3e}, beyond tolerance {tol:.3e}{hint}")]
    Indefinite {
        index: usize,
        value: f64,
        tol: f64,
        hint: String,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("rank-deficient block in Gram-Schmidt: smallest Gram eigenvalue {min_eig:.3e} (largest {max_eig:.3e})")]
    RankDeficient { min_eig: f64, max_eig: f64 },

    #[error("fixed-point iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
