use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid Jordan data: {0}")]
    Jordan(String),

    #[error("ill-conditioned similarity transform: estimated condition number {cond:.3e}")]
    IllConditioned { cond: f64 },

    #[error("matrix is not antisymmetric: |M[{i},{j}] + M[{j},{i}]| = {residual:.3e}")]
    NotAntisymmetric { i: usize, j: usize, residual: f64 },

    #[error("matrix is not positive semidefinite: minimum eigenvalue {min_eig:.3e}")]
    Indefinite { min_eig: f64 },

    #[error("eigensolver did not converge ({} partial eigenvalues available)", partial.len())]
    NoConvergence { partial: Vec<num_complex::Complex64> },

    #[error("argument outside the validated domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("structural check failed: {0}")]
    Structure(String),

    #[error("conjugate pairing failed: {0}")]
    Pairing(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("replica {replica}: {source}")]
    Replica {
        replica: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
