//! Packet-success probability under interference.
//!
//! A link succeeds when `h r^-α / Σ b_i h_i r_i^-α > β`, with `b_i` the
//! Bernoulli(p_i) activity of interferer `i`. Independent access is covered
//! by closed forms (Rayleigh), an exact power-series evaluation (integer
//! Nakagami-m), a brute-force enumeration oracle and a sampling estimator.
//! Carrier sensing on a one-lane chain is covered by the sensed/hidden
//! node decomposition.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_probability, Error, Result};
use crate::propagation::{interference_radius, sample_fading, FadingModel, PathLoss};
use crate::special::regularized_upper_gamma;

/// Largest interferer count accepted by [`ps_enumeration_oracle`].
pub const MAX_ENUMERATED: usize = 20;

/// Slack used when comparing lattice distances against radii.
const GEOMETRY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interferer {
    /// Distance to the receiver, meters.
    pub distance: f64,
    /// Per-slot transmission probability.
    pub access: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkScenario {
    /// Transmitter to receiver distance, meters.
    pub distance: f64,
    pub interferers: Vec<Interferer>,
    /// Linear SIR decoding threshold.
    pub beta: f64,
    pub path_loss: PathLoss,
    pub fading: FadingModel,
}

impl LinkScenario {
    pub fn validate(&self) -> Result<()> {
        check_positive("link distance", self.distance)?;
        check_positive("SIR threshold", self.beta)?;
        for (i, it) in self.interferers.iter().enumerate() {
            check_positive(&format!("interferer {i} distance"), it.distance)?;
            check_probability(&format!("interferer {i} access"), it.access)?;
        }
        Ok(())
    }

    /// `β (r / r_i)^α`: the SIR-normalized strength of interferer `i`.
    fn relative_strength(&self, it: &Interferer) -> f64 {
        self.beta * (self.distance / it.distance).powf(self.path_loss.exponent())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Zero for exact evaluations.
    pub samples: u64,
}

impl PsEstimate {
    pub fn exact(value: f64) -> Self {
        PsEstimate {
            value,
            std_error: 0.0,
            samples: 0,
        }
    }
}

/// Closed-form success probability under Rayleigh fading:
/// `∏ [1 - p_i + p_i / (1 + β (r/r_i)^α)]`.
pub fn ps_rayleigh_exact(s: &LinkScenario) -> Result<f64> {
    if !s.fading.is_rayleigh() {
        return Err(Error::WrongFading(s.fading.label()));
    }
    s.validate()?;
    Ok(s.interferers
        .iter()
        .map(|it| 1.0 - it.access + it.access / (1.0 + s.relative_strength(it)))
        .product())
}

/// Exact Rayleigh success probability by summing over all `2^n` activity
/// patterns. For an active set `A` the conditional success probability is
/// the Laplace transform of exponential interference,
/// `∏_{i∈A} 1 / (1 + β (r/r_i)^α)`.
pub fn ps_enumeration_oracle(s: &LinkScenario) -> Result<f64> {
    if !s.fading.is_rayleigh() {
        return Err(Error::WrongFading(s.fading.label()));
    }
    s.validate()?;
    let n = s.interferers.len();
    if n > MAX_ENUMERATED {
        return Err(Error::TooManyInterferers {
            got: n,
            max: MAX_ENUMERATED,
        });
    }
    let laplace: Vec<f64> = s
        .interferers
        .iter()
        .map(|it| 1.0 / (1.0 + s.relative_strength(it)))
        .collect();
    let mut total = 0.0;
    for pattern in 0u32..(1u32 << n) {
        let mut weight = 1.0;
        let mut conditional = 1.0;
        for (i, it) in s.interferers.iter().enumerate() {
            if pattern & (1 << i) != 0 {
                weight *= it.access;
                conditional *= laplace[i];
            } else {
                weight *= 1.0 - it.access;
            }
        }
        total += weight * conditional;
    }
    Ok(total)
}

/// Exact success probability for integer Nakagami-m fading.
///
/// With `c = m β r^α` and `Q(m, x) = e^{-x} Σ_{j<m} x^j/j!`, the success
/// probability is `Σ_{j<m} (-c)^j L^{(j)}(c) / j!` where `L` is the Laplace
/// transform of the interference. Each interferer contributes the factor
/// `1 - p_i + p_i (1 + s g_i/m)^{-m}`; expanding every factor around `s = c`
/// gives power series in `w` with nonnegative coefficients, so the result is
/// the sum of the first `m` coefficients of their product.
pub fn ps_nakagami_exact(s: &LinkScenario) -> Result<f64> {
    let m = match s.fading {
        FadingModel::Nakagami { m } => m as usize,
        FadingModel::NoFading => return Err(Error::WrongFading(s.fading.label())),
    };
    s.validate()?;
    let mf = m as f64;
    let mut product = vec![0.0; m];
    product[0] = 1.0;
    let mut factor = vec![0.0; m];
    for it in &s.interferers {
        // a = 1 + c g_i / m = 1 + β (r/r_i)^α
        let a = 1.0 + s.relative_strength(it);
        let w = (a - 1.0) / a;
        let mut coef = a.powf(-mf);
        for (k, f) in factor.iter_mut().enumerate() {
            *f = it.access * coef;
            // binom(m+k, k+1) / binom(m+k-1, k) = (m+k) / (k+1)
            coef *= w * (mf + k as f64) / (k as f64 + 1.0);
        }
        factor[0] += 1.0 - it.access;
        let mut next = vec![0.0; m];
        for (i, &p) in product.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (j, &f) in factor.iter().enumerate().take(m - i) {
                next[i + j] += p * f;
            }
        }
        product = next;
    }
    Ok(product.iter().sum::<f64>().clamp(0.0, 1.0))
}

/// Sampling estimator of the success probability.
///
/// Each sample draws interferer activity and fading, forms the interference
/// `I = Σ b_i h_i r_i^-α` and scores `Q(m, m β r^α I)`, the probability that
/// the desired fading clears the threshold. Without fading the score is the
/// indicator `r^-α > β I`.
pub fn ps_nakagami_mc<R: Rng + ?Sized>(
    s: &LinkScenario,
    samples: u64,
    rng: &mut R,
) -> Result<PsEstimate> {
    s.validate()?;
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be >= 1".into()));
    }
    let gains: Vec<f64> = s
        .interferers
        .iter()
        .map(|it| s.path_loss.gain(it.distance))
        .collect();
    let signal_gain = s.path_loss.gain(s.distance);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let mut interference = 0.0;
        for (it, g) in s.interferers.iter().zip(&gains) {
            // Both draws are always taken so streams stay aligned across
            // scenarios that differ only in access probabilities.
            let active = rng.gen::<f64>() < it.access;
            let h = sample_fading(s.fading, rng);
            if active {
                interference += h * g;
            }
        }
        let score = match s.fading {
            FadingModel::Nakagami { m } => {
                let x = f64::from(m) * s.beta * interference / signal_gain;
                regularized_upper_gamma(m, x)
            }
            FadingModel::NoFading => {
                if signal_gain > s.beta * interference {
                    1.0
                } else {
                    0.0
                }
            }
        };
        sum += score;
        sum_sq += score * score;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(PsEstimate {
        value: mean.clamp(0.0, 1.0),
        std_error: (var / n).sqrt(),
        samples,
    })
}

/// Exact success probability for any fading law supported exactly.
pub fn ps_exact(s: &LinkScenario) -> Result<f64> {
    match s.fading {
        FadingModel::Nakagami { m: 1 } => ps_rayleigh_exact(s),
        FadingModel::Nakagami { .. } => ps_nakagami_exact(s),
        FadingModel::NoFading => Err(Error::WrongFading(s.fading.label())),
    }
}

/// How an interferer's per-slot probability is widened when slots are not
/// aligned across vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsyncRule {
    /// `p + p - p·p`, the probability of overlapping either of two slots.
    #[default]
    Exact,
    /// `2p`, capped at one.
    Doubled,
}

impl AsyncRule {
    pub fn apply(self, p: f64) -> f64 {
        match self {
            AsyncRule::Exact => asyncize(p),
            AsyncRule::Doubled => asyncize_doubled(p),
        }
    }
}

/// An unsynchronized interferer overlaps at most two slots of a
/// transmission: `2p - p²`.
pub fn asyncize(p: f64) -> f64 {
    p + p - p * p
}

/// First-order approximation `2p` of [`asyncize`], capped at one.
pub fn asyncize_doubled(p: f64) -> f64 {
    (2.0 * p).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotMode {
    Synchronous,
    #[default]
    Asynchronous,
}

impl SlotMode {
    /// Effective interferer access for this slot alignment.
    pub fn interferer_access(self, p: f64, rule: AsyncRule) -> f64 {
        match self {
            SlotMode::Synchronous => p,
            SlotMode::Asynchronous => rule.apply(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsConfig {
    /// Carrier-sensing radius, meters.
    pub sensing_radius: f64,
    pub slot_mode: SlotMode,
    /// Channel access probability of the transmitter.
    pub tx_access: f64,
    #[serde(default)]
    pub async_rule: AsyncRule,
}

impl CsConfig {
    pub fn validate(&self) -> Result<()> {
        check_positive("carrier-sensing radius", self.sensing_radius)?;
        check_probability("transmitter access", self.tx_access)
    }
}

/// Probability that the transmitter finds the channel idle and transmits,
/// `p_T ∏ (1 - p_i)` over the vehicles it senses. Tight for small access
/// probabilities, an upper bound otherwise.
pub fn cs_access_probability(tx_access: f64, neighbor_access: &[f64]) -> f64 {
    tx_access * neighbor_access.iter().map(|p| 1.0 - p).product::<f64>()
}

/// Number of equally spaced vehicles in the hidden stretch of length
/// `r + r_I - r_CS` behind the receiver.
pub fn count_hidden_nodes(spacing: f64, r: f64, r_i: f64, r_cs: f64) -> usize {
    let hidden = r + r_i - r_cs;
    if hidden <= 0.0 {
        return 0;
    }
    ((hidden + GEOMETRY_EPS) / spacing).floor() as usize
}

/// Smallest sensing radius for which hidden nodes cannot be active
/// together: `max(r_I - r, (r + r_I)/2)`.
pub fn cs_validity_floor(r: f64, r_i: f64) -> f64 {
    (r_i - r).max((r + r_i) / 2.0)
}

/// The sensing radius that removes every hidden node, `r + r_I`.
pub fn optimal_sensing_radius(r: f64, r_i: f64) -> f64 {
    r + r_i
}

/// Success probability from the sensed and hidden rosters:
/// `p_T ∏_sensed (1 - p_i) · [1 - Σ_hidden p'_i]`.
///
/// `hidden_access` must already carry the slot-mode widening. Hidden nodes
/// never transmit together inside the validity region, so their outage
/// events are disjoint and their probabilities add.
pub fn ps_carrier_sense_roster(tx_access: f64, sensed: &[f64], hidden_access: &[f64]) -> f64 {
    let access = cs_access_probability(tx_access, sensed);
    let outage: f64 = hidden_access.iter().sum();
    access * (1.0 - outage).max(0.0)
}

/// Carrier-sensing success probability on an infinite one-lane lattice with
/// vehicles every `spacing` meters on both sides of the transmitter.
///
/// The lattice access probability is taken from `s.interferers`, which must
/// be homogeneous. Sensed vehicles are those within `r_CS` of the
/// transmitter, excluding the receiver; the hidden count is
/// [`count_hidden_nodes`]. The interference radius follows the scenario's
/// fading law.
pub fn ps_carrier_sense(s: &LinkScenario, cs: &CsConfig, spacing: f64) -> Result<PsEstimate> {
    s.validate()?;
    cs.validate()?;
    check_positive("spacing", spacing)?;
    let p = homogeneous_access(&s.interferers)?;
    let r_i = interference_radius(s.distance, s.beta, s.path_loss, s.fading)?;
    let floor = cs_validity_floor(s.distance, r_i);
    if cs.sensing_radius + GEOMETRY_EPS < floor {
        return Err(Error::CsBelowValidity {
            r_cs: cs.sensing_radius,
            floor,
        });
    }
    let n_cs = lattice_sensed_count(spacing, s.distance, cs.sensing_radius);
    let sensed = vec![p; n_cs];
    let hidden = if cs.sensing_radius + GEOMETRY_EPS >= optimal_sensing_radius(s.distance, r_i) {
        Vec::new()
    } else {
        let n = count_hidden_nodes(spacing, s.distance, r_i, cs.sensing_radius);
        vec![cs.slot_mode.interferer_access(p, cs.async_rule); n]
    };
    Ok(PsEstimate::exact(ps_carrier_sense_roster(
        cs.tx_access,
        &sensed,
        &hidden,
    )))
}

/// Lattice vehicles within `r_cs` of the transmitter on either side,
/// excluding the receiver at distance `r` behind it.
pub fn lattice_sensed_count(spacing: f64, r: f64, r_cs: f64) -> usize {
    let per_side = ((r_cs + GEOMETRY_EPS) / spacing).floor() as usize;
    let receiver_on_lattice = {
        let k = (r / spacing).round();
        k >= 1.0 && (k * spacing - r).abs() < GEOMETRY_EPS && r <= r_cs + GEOMETRY_EPS
    };
    2 * per_side - usize::from(receiver_on_lattice)
}

fn homogeneous_access(interferers: &[Interferer]) -> Result<f64> {
    let Some(first) = interferers.first() else {
        return Ok(0.0);
    };
    if interferers
        .iter()
        .any(|it| (it.access - first.access).abs() > 1e-15)
    {
        return Err(Error::InvalidParameter(
            "lattice carrier sensing needs one access probability for all vehicles".into(),
        ));
    }
    Ok(first.access)
}
