use thiserror::Error;

/// Errors raised by the geometry engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("invalid ambient parameters: {0}")]
    InvalidAmbient(String),
    #[error("point ({x}, {y}, {z}) outside chart domain")]
    OutsideDomain { x: f64, y: f64, z: f64 },
    #[error("degenerate immersion at ({u}, {v})")]
    DegenerateImmersion { u: f64, v: f64 },
    #[error("insufficient stencil at ({u}, {v})")]
    InsufficientStencil { u: f64, v: f64 },
    #[error("patch is not conformal: {0}")]
    NotConformal(String),
    #[error("CMC gate violated: mean curvature defect {defect:e} exceeds {gate:e}")]
    CmcGate { defect: f64, gate: f64 },
    #[error("AR constants undefined; use product_space_operator for tau=0, H!=0, or reject")]
    ArUndefined,
    #[error("product-space operator requires tau = 0 (got {0})")]
    NotProductSpace(f64),
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("no real root: h(t) = {h} < 0 at t = {t}")]
    NoRealRoot { t: f64, h: f64 },
    #[error("catalog: {0}")]
    Catalog(String),
    #[error("spectral: {0}")]
    Spectral(String),
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, GeomError>;
