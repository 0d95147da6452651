//! Fading laws, path loss and the interference radius.
//!
//! Received power from a unit-power transmitter at distance `d` is
//! `h * d^-alpha`, where `h` is the fading power coefficient. Under
//! Nakagami-m fading `h ~ Gamma(shape m, mean 1)`; `m = 1` is Rayleigh.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::special::ln_gamma;

/// Mean fading power. Fixed at one.
pub const MEAN_POWER: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FadingModel {
    NoFading,
    Nakagami { m: u32 },
}

impl FadingModel {
    pub const RAYLEIGH: FadingModel = FadingModel::Nakagami { m: 1 };

    pub fn nakagami(m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter(
                "Nakagami shape m must be >= 1".into(),
            ));
        }
        Ok(FadingModel::Nakagami { m })
    }

    /// Shape parameter, `None` without fading.
    pub fn shape(&self) -> Option<u32> {
        match *self {
            FadingModel::NoFading => None,
            FadingModel::Nakagami { m } => Some(m),
        }
    }

    pub fn is_rayleigh(&self) -> bool {
        self.shape() == Some(1)
    }

    /// Shape written to result tables: 0 stands for no fading.
    pub fn table_m(&self) -> u32 {
        self.shape().unwrap_or(0)
    }

    pub fn label(&self) -> String {
        match *self {
            FadingModel::NoFading => "none".into(),
            FadingModel::Nakagami { m: 1 } => "rayleigh".into(),
            FadingModel::Nakagami { m } => format!("nakagami-{m}"),
        }
    }
}

/// Path-loss exponent, strictly greater than one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PathLoss(f64);

impl PathLoss {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 1.0 && alpha.is_finite() {
            Ok(PathLoss(alpha))
        } else {
            Err(Error::InvalidParameter(format!(
                "path-loss exponent {alpha} must exceed 1"
            )))
        }
    }

    pub fn exponent(&self) -> f64 {
        self.0
    }

    /// Deterministic gain `d^-alpha`.
    pub fn gain(&self, distance: f64) -> f64 {
        distance.powf(-self.0)
    }
}

impl TryFrom<f64> for PathLoss {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        PathLoss::new(v)
    }
}

impl From<PathLoss> for f64 {
    fn from(p: PathLoss) -> f64 {
        p.0
    }
}

/// Draws a fading power coefficient. Returns exactly 1.0 without fading.
pub fn sample_fading<R: Rng + ?Sized>(model: FadingModel, rng: &mut R) -> f64 {
    match model {
        FadingModel::NoFading => MEAN_POWER,
        FadingModel::Nakagami { m } => {
            let shape = f64::from(m);
            Gamma::new(shape, MEAN_POWER / shape)
                .expect("shape >= 1 and positive scale")
                .sample(rng)
        }
    }
}

/// `E[h^s] = Γ(m+s)/Γ(m) · (λ/m)^s`, finite for `s > -m`.
pub fn fractional_moment(model: FadingModel, s: f64) -> Result<f64> {
    match model {
        FadingModel::NoFading => Ok(MEAN_POWER.powf(s)),
        FadingModel::Nakagami { m } => {
            let mf = f64::from(m);
            if s <= -mf || !s.is_finite() {
                return Err(Error::DivergentMoment { m, s });
            }
            Ok((ln_gamma(mf + s) - ln_gamma(mf) + s * (MEAN_POWER / mf).ln()).exp())
        }
    }
}

/// `(π/α) csc(π/α)`: the Rayleigh interference-radius factor.
pub fn rayleigh_radius_factor(alpha: f64) -> f64 {
    let x = PI / alpha;
    x / x.sin()
}

/// Radius around the receiver inside which one active interferer, in
/// expectation over fading, drives the SIR below `beta`.
///
/// No fading gives `r β^{1/α}`. Nakagami-m multiplies by
/// `E[h^{-1/α}] E[h^{1/α}] = Γ(m+1/α)Γ(m-1/α)/Γ(m)²`.
pub fn interference_radius(r: f64, beta: f64, pl: PathLoss, model: FadingModel) -> Result<f64> {
    check_positive("link distance", r)?;
    check_positive("SIR threshold", beta)?;
    let inv_alpha = 1.0 / pl.exponent();
    let base = r * beta.powf(inv_alpha);
    match model {
        FadingModel::NoFading => Ok(base),
        FadingModel::Nakagami { .. } => {
            let factor =
                fractional_moment(model, inv_alpha)? * fractional_moment(model, -inv_alpha)?;
            Ok(base * factor)
        }
    }
}

/// Converts a decibel ratio to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
