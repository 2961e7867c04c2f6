use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("length {0} is not a power of two")]
    NonDyadic(usize),

    #[error("coarse level {coarse} exceeds fine level {fine}")]
    LevelOrder { coarse: u32, fine: u32 },

    #[error("level mismatch: {0}")]
    LevelMismatch(String),

    #[error("parameter `{name}` out of range: {value}")]
    InvalidParameter { name: &'static str, value: f64 },

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("support mismatch: p has mass where q vanishes near x = {0}")]
    SupportMismatch(f64),

    #[error("integrand is not finite near x = {0}")]
    NonIntegrable(f64),

    #[error("resource guard: {0}")]
    Resource(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter { name, value })
    }
}

pub(crate) fn finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter { name, value })
    }
}
