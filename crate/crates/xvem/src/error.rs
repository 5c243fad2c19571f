use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("quadrature error: {0}")]
    Quadrature(String),

    #[error("local space error: {0}")]
    Space(String),

    #[error("projector error on element {element}: {detail}")]
    Projector { element: usize, detail: String },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("linear solver failed: {detail} (best relative residual {residual:e})")]
    Solver { detail: String, residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
