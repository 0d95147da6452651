use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fractional moment E[h^{s}] diverges for shape m = {m} (requires s > -m)")]
    DivergentMoment { m: u32, s: f64 },

    #[error("operation requires Rayleigh fading (Nakagami m = 1), got {0}")]
    WrongFading(String),

    #[error("enumeration oracle supports at most {max} interferers, got {got}")]
    TooManyInterferers { got: usize, max: usize },

    #[error("carrier-sensing radius {r_cs} m is below the validity floor {floor} m")]
    CsBelowValidity { r_cs: f64, floor: f64 },

    #[error("vehicle {0} cannot be reached by any communication path")]
    UnreachableVehicle(usize),

    #[error("vehicle {0} does not start strictly behind the vehicle ahead of it")]
    OverlapAtStart(usize),

    #[error("parse error at line {line}, key `{key}`: {message}")]
    Parse {
        line: usize,
        key: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {p} is not a probability"
        )))
    }
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} = {v} must be positive and finite"
        )))
    }
}
