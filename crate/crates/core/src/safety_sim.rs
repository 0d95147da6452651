//! Monte Carlo rear-end collision experiment on a braking chain.
//!
//! Vehicle `V_0` brakes at `t = 0` and broadcasts a safety packet. Obstructive
//! vehicles split the chain into sub-chains that packets cannot cross; the
//! head of each later sub-chain learns of the event from the brake lights
//! ahead of it and then broadcasts to its own sub-chain. Inside a sub-chain a
//! vehicle learns of the event from the first of: a direct packet from the
//! head, a packet relayed by a vehicle that has already braked, or the brake
//! lights of the vehicle immediately ahead. It brakes one reaction time
//! later.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain_kinematics::{simulate_chain, CollisionEvent, VehicleMotion};
use crate::error::{check_positive, check_probability, Error, Result};
use crate::mac_analytics::{
    count_hidden_nodes, cs_validity_floor, optimal_sensing_radius, ps_carrier_sense_roster,
    ps_exact, AsyncRule, Interferer, LinkScenario, SlotMode,
};
use crate::propagation::{db_to_linear, interference_radius, FadingModel, PathLoss};

/// Geometric attempt counts above this are treated as never delivered.
pub const ATTEMPT_CAP: u64 = 1_000_000;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionLaw {
    /// Mean of the underlying normal, log-seconds.
    pub mu: f64,
    /// Standard deviation of the underlying normal.
    pub sigma: f64,
}

impl Default for ReactionLaw {
    fn default() -> Self {
        ReactionLaw {
            mu: 0.17,
            sigma: 0.44,
        }
    }
}

impl ReactionLaw {
    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }
}

/// Driver reaction time, `exp(N(μ, σ²))` seconds.
pub fn sample_reaction_time<R: Rng + ?Sized>(law: &ReactionLaw, rng: &mut R) -> f64 {
    if law.sigma == 0.0 {
        return law.mu.exp();
    }
    LogNormal::new(law.mu, law.sigma)
        .expect("validated reaction law")
        .sample(rng)
}

/// Uniform `k`-subset of the vehicles `1..n`, sorted ascending.
pub fn sample_obstructions<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    assert!(k < n, "obstruction count must be below the vehicle count");
    let mut picked: Vec<usize> = sample_indices(rng, n - 1, k)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    picked.sort_unstable();
    picked
}

/// A maximal run of vehicles between obstructions. The head is either `V_0`
/// or an obstructive vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubChain {
    pub head: usize,
    pub len: usize,
}

pub fn sub_chains(n: usize, obstructions: &[usize]) -> Vec<SubChain> {
    let mut heads = vec![0];
    heads.extend(obstructions.iter().copied().filter(|&o| o > 0 && o < n));
    heads.sort_unstable();
    heads.dedup();
    heads
        .iter()
        .enumerate()
        .map(|(k, &head)| {
            let end = heads.get(k + 1).copied().unwrap_or(n);
            SubChain {
                head,
                len: end - head,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Independent,
    CarrierSense,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Independent => "independent",
            Scheme::CarrierSense => "carrier_sense",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingRadius {
    /// `r + r_I` for every hop, which leaves no hidden node.
    Optimal,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainScenario {
    pub vehicles: usize,
    /// Bumper-to-bumper gap, meters.
    pub spacing: f64,
    pub speed: f64,
    pub decel_min: f64,
    pub decel_max: f64,
    pub reaction: ReactionLaw,
    pub obstructions: usize,
    pub packet_bits: f64,
    /// Bits per second.
    pub data_rate: f64,
    /// Linear SIR threshold.
    pub beta: f64,
    pub path_loss: PathLoss,
    pub fading: FadingModel,
    pub scheme: Scheme,
    pub slot_mode: SlotMode,
    pub async_rule: AsyncRule,
    pub sensing_radius: SensingRadius,
    /// Channel access probability of every vehicle.
    pub access: f64,
    /// Access probability of the broadcasting head, if different.
    pub head_access: Option<f64>,
}

impl Default for ChainScenario {
    fn default() -> Self {
        ChainScenario {
            vehicles: 25,
            spacing: 25.0,
            speed: 20.0,
            decel_min: 6.0,
            decel_max: 9.0,
            reaction: ReactionLaw::default(),
            obstructions: 4,
            packet_bits: 250.0 * 8.0,
            data_rate: 6e6,
            beta: db_to_linear(8.0),
            path_loss: PathLoss::new(2.0).expect("valid exponent"),
            fading: FadingModel::RAYLEIGH,
            scheme: Scheme::Independent,
            slot_mode: SlotMode::Asynchronous,
            async_rule: AsyncRule::Exact,
            sensing_radius: SensingRadius::Optimal,
            access: 0.05,
            head_access: None,
        }
    }
}

impl ChainScenario {
    pub fn validate(&self) -> Result<()> {
        if self.vehicles < 2 {
            return Err(Error::Validation(
                "a chain needs at least 2 vehicles".into(),
            ));
        }
        if self.obstructions >= self.vehicles {
            return Err(Error::Validation(format!(
                "obstruction count {} must be below the vehicle count {}",
                self.obstructions, self.vehicles
            )));
        }
        for (name, v) in [
            ("spacing", self.spacing),
            ("speed", self.speed),
            ("decel_min", self.decel_min),
            ("decel_max", self.decel_max),
            ("packet_bits", self.packet_bits),
            ("data_rate", self.data_rate),
            ("beta", self.beta),
        ] {
            check_positive(name, v).map_err(|e| Error::Validation(e.to_string()))?;
        }
        if self.decel_min > self.decel_max {
            return Err(Error::Validation(format!(
                "decel_min {} exceeds decel_max {}",
                self.decel_min, self.decel_max
            )));
        }
        if !(self.reaction.sigma >= 0.0 && self.reaction.mu.is_finite()) {
            return Err(Error::Validation(
                "reaction-time law needs finite mu and sigma >= 0".into(),
            ));
        }
        check_probability("access", self.access).map_err(|e| Error::Validation(e.to_string()))?;
        if let Some(p) = self.head_access {
            check_probability("head_access", p).map_err(|e| Error::Validation(e.to_string()))?;
        }
        if let SensingRadius::Fixed(r) = self.sensing_radius {
            check_positive("r_cs", r).map_err(|e| Error::Validation(e.to_string()))?;
        }
        if self.fading == FadingModel::NoFading {
            return Err(Error::Validation(
                "chain simulation needs a Nakagami fading law".into(),
            ));
        }
        Ok(())
    }

    /// Airtime of one packet, seconds.
    pub fn slot_time(&self) -> f64 {
        self.packet_bits / self.data_rate
    }

    fn access_of(&self, rel: usize) -> f64 {
        if rel == 0 {
            self.head_access.unwrap_or(self.access)
        } else {
            self.access
        }
    }
}

/// Per-attempt delivery probabilities `P_s · p_tx · (1 - p_rx)` for every
/// forward hop in a sub-chain of a given length.
#[derive(Debug, Clone, PartialEq)]
pub struct HopTable {
    len: usize,
    slot: f64,
    q: Vec<f64>,
}

impl HopTable {
    pub fn build(sc: &ChainScenario, len: usize) -> Result<Self> {
        let mut q = vec![0.0; len * len];
        for tx in 0..len {
            for rx in tx + 1..len {
                q[tx * len + rx] = hop_success(sc, len, tx, rx)?;
            }
        }
        Ok(HopTable {
            len,
            slot: sc.slot_time(),
            q,
        })
    }

    /// Builds a table from explicit per-hop probabilities, indexed
    /// `q[tx][rx]` for `tx < rx`.
    pub fn from_probabilities(slot: f64, q: Vec<Vec<f64>>) -> Self {
        let len = q.len();
        let flat = q.into_iter().flat_map(|row| {
            assert_eq!(row.len(), len, "square table expected");
            row
        });
        HopTable {
            len,
            slot,
            q: flat.collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn q(&self, tx: usize, rx: usize) -> f64 {
        self.q[tx * self.len + rx]
    }

    pub fn slot(&self) -> f64 {
        self.slot
    }
}

/// Per-attempt success of the hop `tx -> rx` (relative indices) inside a
/// sub-chain of `len` vehicles.
fn hop_success(sc: &ChainScenario, len: usize, tx: usize, rx: usize) -> Result<f64> {
    let p_tx = sc.access_of(tx);
    let p_rx = sc.access_of(rx);
    let r = (rx - tx) as f64 * sc.spacing;
    let others = (0..len).filter(|&c| c != tx && c != rx);
    match sc.scheme {
        Scheme::Independent => {
            let link = LinkScenario {
                distance: r,
                interferers: others
                    .map(|c| Interferer {
                        distance: c.abs_diff(rx) as f64 * sc.spacing,
                        access: sc
                            .slot_mode
                            .interferer_access(sc.access_of(c), sc.async_rule),
                    })
                    .collect(),
                beta: sc.beta,
                path_loss: sc.path_loss,
                fading: sc.fading,
            };
            Ok(ps_exact(&link)? * p_tx * (1.0 - p_rx))
        }
        Scheme::CarrierSense => {
            let r_i = interference_radius(r, sc.beta, sc.path_loss, sc.fading)?;
            let optimum = optimal_sensing_radius(r, r_i);
            let r_cs = match sc.sensing_radius {
                SensingRadius::Optimal => optimum,
                SensingRadius::Fixed(x) => {
                    let floor = cs_validity_floor(r, r_i);
                    if x < floor {
                        return Err(Error::CsBelowValidity { r_cs: x, floor });
                    }
                    x
                }
            };
            let tol = 1e-9;
            let mut sensed = Vec::new();
            let mut beyond = Vec::new();
            for c in others {
                let d_tx = c.abs_diff(tx) as f64 * sc.spacing;
                if d_tx <= r_cs + tol {
                    sensed.push(sc.access_of(c));
                } else if c > rx {
                    beyond.push(c);
                }
            }
            let hidden: Vec<f64> = if r_cs + tol >= optimum {
                Vec::new()
            } else {
                let n = count_hidden_nodes(sc.spacing, r, r_i, r_cs);
                beyond
                    .iter()
                    .take(n)
                    .map(|&c| {
                        sc.slot_mode
                            .interferer_access(sc.access_of(c), sc.async_rule)
                    })
                    .collect()
            };
            Ok(ps_carrier_sense_roster(p_tx, &sensed, &hidden) * (1.0 - p_rx))
        }
    }
}

/// Hop tables for every sub-chain length `1..=n` of a scenario.
#[derive(Debug, Clone)]
pub struct LinkTables {
    by_len: Vec<HopTable>,
}

impl LinkTables {
    pub fn build(sc: &ChainScenario) -> Result<Self> {
        sc.validate()?;
        let by_len = (0..=sc.vehicles)
            .map(|len| HopTable::build(sc, len))
            .collect::<Result<_>>()?;
        Ok(LinkTables { by_len })
    }

    pub fn for_len(&self, len: usize) -> &HopTable {
        &self.by_len[len]
    }
}

/// Uniform draws that fix every geometric attempt count of one sub-chain.
/// The number and order of draws depend only on the sub-chain length, so
/// scenarios that differ only in probabilities share the same randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct AttemptDraws {
    direct: Vec<f64>,
    // relay[k][j - 1]: hop j -> k, for 1 <= j <= k - 2.
    relay: Vec<Vec<f64>>,
}

impl AttemptDraws {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Self {
        // Uniforms in (0, 1].
        let mut u = || 1.0 - rng.gen::<f64>();
        let direct = (0..len).map(|_| u()).collect();
        let relay = (0..len)
            .map(|k| (1..k.saturating_sub(1)).map(|_| u()).collect())
            .collect();
        AttemptDraws { direct, relay }
    }
}

/// Attempts until the first success of a Bernoulli(q) trial, by inversion.
/// `None` when the packet never gets through or the cap is exceeded.
pub fn geometric_attempts(u: f64, q: f64) -> Option<u64> {
    if q >= 1.0 {
        return Some(1);
    }
    if q <= 0.0 {
        return None;
    }
    let g = (u.ln() / (-q).ln_1p()).ceil().max(1.0);
    (g <= ATTEMPT_CAP as f64).then_some(g as u64)
}

#[derive(Debug, Clone, Copy)]
pub enum DelayMode<'a> {
    /// Expected attempt counts `1/q`.
    Expected,
    /// Geometric attempt counts from pre-drawn uniforms.
    Sampled(&'a AttemptDraws),
}

/// Time for relative vehicle `k >= 1` of a sub-chain to learn of the event
/// from packets, measured from the head's brake onset.
///
/// The minimum over a direct packet from the head, a packet relayed by
/// vehicle `j <= k - 2` after its driver reacts, and the brake lights of
/// vehicle `k - 1` once it received the head's packet and reacted.
/// `reaction[j]` is the reaction time of relative vehicle `j`.
pub fn reception_delay(
    table: &HopTable,
    k: usize,
    reaction: &[f64],
    mode: DelayMode<'_>,
) -> Result<f64> {
    let d = packet_delay(table, k, reaction, mode);
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::UnreachableVehicle(k))
    }
}

fn packet_delay(table: &HopTable, k: usize, reaction: &[f64], mode: DelayMode<'_>) -> f64 {
    assert!(k >= 1 && k < table.len(), "vehicle {k} outside sub-chain");
    let slot = table.slot();
    let hop = |tx: usize, rx: usize, u: Option<f64>| -> f64 {
        let q = table.q(tx, rx);
        match u {
            None if q > 0.0 => slot / q,
            None => f64::INFINITY,
            Some(u) => geometric_attempts(u, q).map_or(f64::INFINITY, |g| g as f64 * slot),
        }
    };
    let direct_u = |j: usize| match mode {
        DelayMode::Expected => None,
        DelayMode::Sampled(d) => Some(d.direct[j]),
    };
    let direct = |j: usize| hop(0, j, direct_u(j));

    let mut best = direct(k);
    if k >= 2 {
        best = best.min(direct(k - 1) + reaction[k - 1]);
    }
    let relays = reaction
        .iter()
        .enumerate()
        .take(k.saturating_sub(1))
        .skip(1);
    for (j, &tau_j) in relays {
        let u = match mode {
            DelayMode::Expected => None,
            DelayMode::Sampled(d) => Some(d.relay[k][j - 1]),
        };
        best = best.min(direct(j) + tau_j + hop(j, k, u));
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub brake_onset_times: Vec<f64>,
    pub collision_events: Vec<CollisionEvent>,
    pub collided_vehicle_count: usize,
    /// Geometric draws that hit [`ATTEMPT_CAP`].
    pub cap_hits: usize,
}

/// Random stream of one trial: the master seed selects the key, the trial
/// index selects the ChaCha stream.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Every random quantity of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDraws {
    pub obstructions: Vec<usize>,
    pub decel: Vec<f64>,
    pub reaction: Vec<f64>,
    /// One entry per sub-chain, in chain order.
    pub attempts: Vec<AttemptDraws>,
}

impl TrialDraws {
    pub fn sample<R: Rng + ?Sized>(sc: &ChainScenario, rng: &mut R) -> Self {
        let n = sc.vehicles;
        let obstructions = sample_obstructions(rng, n, sc.obstructions);
        let decel = (0..n)
            .map(|_| rng.gen_range(sc.decel_min..=sc.decel_max))
            .collect();
        let reaction = (0..n)
            .map(|_| sample_reaction_time(&sc.reaction, rng))
            .collect();
        let attempts = sub_chains(n, &obstructions)
            .iter()
            .map(|c| AttemptDraws::draw(rng, c.len))
            .collect();
        TrialDraws {
            obstructions,
            decel,
            reaction,
            attempts,
        }
    }
}

pub fn run_trial(
    sc: &ChainScenario,
    tables: &LinkTables,
    seed: u64,
    trial: u64,
) -> Result<TrialOutcome> {
    let draws = TrialDraws::sample(sc, &mut trial_rng(seed, trial));
    run_trial_with(sc, tables, &draws)
}

/// Runs one trial from explicit draws.
pub fn run_trial_with(
    sc: &ChainScenario,
    tables: &LinkTables,
    draws: &TrialDraws,
) -> Result<TrialOutcome> {
    let n = sc.vehicles;
    let tau = &draws.reaction;
    let mut onset = vec![0.0; n];
    let mut cap_hits = 0;
    for (chain, attempts) in sub_chains(n, &draws.obstructions)
        .iter()
        .zip(&draws.attempts)
    {
        let h = chain.head;
        if h > 0 {
            onset[h] = onset[h - 1] + tau[h];
        }
        let table = tables.for_len(chain.len);
        let local_tau = &tau[h..h + chain.len];
        cap_hits += count_cap_hits(table, attempts);
        for k in 1..chain.len {
            let i = h + k;
            let by_packet =
                onset[h] + packet_delay(table, k, local_tau, DelayMode::Sampled(attempts));
            let informed = by_packet.min(onset[i - 1]);
            onset[i] = informed + tau[i];
        }
    }

    let motions: Vec<VehicleMotion> = (0..n)
        .map(|i| VehicleMotion {
            x0: -(i as f64) * sc.spacing,
            v0: sc.speed,
            decel: draws.decel[i],
            brake_onset: onset[i],
        })
        .collect();
    let events = simulate_chain(&motions)?;
    Ok(TrialOutcome {
        brake_onset_times: onset,
        collided_vehicle_count: events.len(),
        collision_events: events,
        cap_hits,
    })
}

fn count_cap_hits(table: &HopTable, draws: &AttemptDraws) -> usize {
    let capped = |u: f64, q: f64| q > 0.0 && geometric_attempts(u, q).is_none();
    let mut hits = 0;
    for k in 1..table.len() {
        hits += usize::from(capped(draws.direct[k], table.q(0, k)));
        for j in 1..k.saturating_sub(1) {
            hits += usize::from(capped(draws.relay[k][j - 1], table.q(j, k)));
        }
    }
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEstimate {
    /// Mean over trials of (collided vehicles) / (n - 1).
    pub mean: f64,
    /// Half-width of the 95% normal-approximation interval.
    pub ci_halfwidth: f64,
    pub trials: u64,
    pub cap_hits: u64,
}

/// Integer sufficient statistics of a batch of trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialTally {
    pub trials: u64,
    pub collided: u64,
    pub collided_sq: u64,
    pub cap_hits: u64,
}

impl TrialTally {
    pub fn add(&mut self, outcome: &TrialOutcome) {
        let c = outcome.collided_vehicle_count as u64;
        self.trials += 1;
        self.collided += c;
        self.collided_sq += c * c;
        self.cap_hits += outcome.cap_hits as u64;
    }

    pub fn merge(self, other: TrialTally) -> TrialTally {
        TrialTally {
            trials: self.trials + other.trials,
            collided: self.collided + other.collided,
            collided_sq: self.collided_sq + other.collided_sq,
            cap_hits: self.cap_hits + other.cap_hits,
        }
    }

    pub fn estimate(&self, vehicles: usize) -> CollisionEstimate {
        let t = self.trials as f64;
        let denom = (vehicles - 1) as f64;
        let mean = self.collided as f64 / (t * denom);
        let ci_halfwidth = if self.trials > 1 {
            let sum_sq = self.collided_sq as f64 / (denom * denom);
            let var = ((sum_sq - t * mean * mean) / (t - 1.0)).max(0.0);
            Z95 * (var / t).sqrt()
        } else {
            0.0
        };
        CollisionEstimate {
            mean,
            ci_halfwidth,
            trials: self.trials,
            cap_hits: self.cap_hits,
        }
    }
}

/// Tallies trials `first..first + count` of a scenario on the current
/// rayon pool.
pub fn tally_trials(
    sc: &ChainScenario,
    tables: &LinkTables,
    seed: u64,
    first: u64,
    count: u64,
) -> Result<TrialTally> {
    (first..first + count)
        .into_par_iter()
        .map(|trial| {
            let outcome = run_trial(sc, tables, seed, trial)?;
            let mut t = TrialTally::default();
            t.add(&outcome);
            Ok(t)
        })
        .try_reduce(TrialTally::default, |a, b| Ok(a.merge(b)))
}

/// Runs `f` on a pool of `workers` threads; zero means the rayon default.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub fn estimate_collision_probability(
    sc: &ChainScenario,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<CollisionEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let tables = LinkTables::build(sc)?;
    let tally = with_workers(workers, || tally_trials(sc, &tables, seed, 0, trials))??;
    Ok(tally.estimate(sc.vehicles))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub scheme: Scheme,
    pub fading_m: u32,
    pub mean_collision_prob: f64,
    pub ci_halfwidth: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Rows of one curve, in grid order.
    pub fn curve(&self, scheme: Scheme, fading_m: u32) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.scheme == scheme && r.fading_m == fading_m)
            .collect()
    }
}

pub const SWEEP_SCHEMES: [Scheme; 2] = [Scheme::Independent, Scheme::CarrierSense];

/// Collision probability for every (p, scheme, fading) cell. Every cell uses
/// the same trial seeds.
pub fn sweep_channel_access(
    base: &ChainScenario,
    p_grid: &[f64],
    fadings: &[FadingModel],
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<SweepResult> {
    if p_grid.is_empty() {
        return Err(Error::InvalidParameter("empty access grid".into()));
    }
    if fadings.is_empty() {
        return Err(Error::InvalidParameter("no fading models to sweep".into()));
    }
    if let Some(p) = p_grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "grid value {p} outside (0, 1)"
        )));
    }
    let mut rows = Vec::new();
    with_workers(workers, || -> Result<()> {
        for &p in p_grid {
            for scheme in SWEEP_SCHEMES {
                for &fading in fadings {
                    let sc = ChainScenario {
                        access: p,
                        scheme,
                        fading,
                        ..base.clone()
                    };
                    let tables = LinkTables::build(&sc)?;
                    let est = tally_trials(&sc, &tables, seed, 0, trials)?.estimate(sc.vehicles);
                    rows.push(SweepRow {
                        p,
                        scheme,
                        fading_m: fading.table_m(),
                        mean_collision_prob: est.mean,
                        ci_halfwidth: est.ci_halfwidth,
                        trials,
                    });
                }
            }
        }
        Ok(())
    })??;
    Ok(SweepResult { rows })
}

/// `start, start + step, ..., <= stop`, rounded to suppress float drift.
pub fn access_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| ((start + step * i as f64) * 1e12).round() / 1e12)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reaction_time_mean() {
        let law = ReactionLaw::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let t = sample_reaction_time(&law, &mut rng);
            assert!(t > 0.0);
            sum += t;
        }
        let mean = sum / n as f64;
        assert!((law.mean() - 1.3059).abs() < 2e-4);
        assert!((mean - law.mean()).abs() < 0.01 * law.mean(), "{mean}");
    }

    #[test]
    fn reaction_time_mean_matches_box_muller() {
        // Reference sampler built from uniforms only.
        let law = ReactionLaw::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 500_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            sum += (law.mu + law.sigma * z).exp();
        }
        assert!((sum / n as f64 - law.mean()).abs() < 0.01 * law.mean());
    }

    #[test]
    fn degenerate_reaction_law() {
        let law = ReactionLaw {
            mu: 0.17,
            sigma: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((sample_reaction_time(&law, &mut rng) - 1.1853).abs() < 1e-4);
    }

    #[test]
    fn obstruction_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(sample_obstructions(&mut rng, 25, 0).is_empty());
        assert_eq!(sub_chains(25, &[]), vec![SubChain { head: 0, len: 25 }]);
        let all = sample_obstructions(&mut rng, 25, 24);
        assert_eq!(all, (1..25).collect::<Vec<_>>());
        let chains = sub_chains(25, &all);
        assert_eq!(chains.len(), 25);
        assert!(chains.iter().all(|c| c.len == 1));
    }

    #[test]
    fn obstruction_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 100_000;
        let mut counts = [0u32; 25];
        for _ in 0..draws {
            let picked = sample_obstructions(&mut rng, 25, 4);
            assert_eq!(picked.len(), 4);
            for i in picked {
                counts[i] += 1;
            }
        }
        assert_eq!(counts[0], 0);
        let p = 4.0 / 24.0;
        let expected = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        // 24 simultaneous checks: 4σ per index keeps the family-wise
        // false-alarm rate near 0.15%.
        for (i, &c) in counts.iter().enumerate().skip(1) {
            assert!((f64::from(c) - expected).abs() < 4.0 * sd, "index {i}: {c}");
        }
        // Pearson statistic on 23 degrees of freedom; 0.1% critical value 49.7.
        let chi2: f64 = counts[1..]
            .iter()
            .map(|&c| (f64::from(c) - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 49.7, "chi2 {chi2}");
    }

    #[test]
    fn sub_chain_partition() {
        let chains = sub_chains(10, &[3, 7]);
        assert_eq!(
            chains,
            vec![
                SubChain { head: 0, len: 3 },
                SubChain { head: 3, len: 4 },
                SubChain { head: 7, len: 3 },
            ]
        );
    }

    fn single_hop_table(q: f64) -> HopTable {
        HopTable::from_probabilities(2000.0 / 6e6, vec![vec![0.0, q], vec![0.0, 0.0]])
    }

    #[test]
    fn expected_single_hop() {
        let t = single_hop_table(0.5);
        let d = reception_delay(&t, 1, &[0.0, 0.0], DelayMode::Expected).unwrap();
        assert!((d - 666.666_666e-6).abs() < 1e-9, "{d}");
    }

    #[test]
    fn certain_delivery_takes_one_slot() {
        let len = 5;
        let t = HopTable::from_probabilities(2000.0 / 6e6, vec![vec![1.0; len]; len]);
        let tau = vec![1.0; len];
        for k in 1..len {
            let d = reception_delay(&t, k, &tau, DelayMode::Expected).unwrap();
            assert!((d - 2000.0 / 6e6).abs() < 1e-15);
        }
    }

    #[test]
    fn unreachable_vehicle() {
        let t = single_hop_table(0.0);
        assert!(matches!(
            reception_delay(&t, 1, &[0.0, 0.0], DelayMode::Expected),
            Err(Error::UnreachableVehicle(1))
        ));
    }

    #[test]
    fn sampled_single_hop_mean() {
        let t = single_hop_table(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let draws = AttemptDraws::draw(&mut rng, 2);
            sum += reception_delay(&t, 1, &[0.0, 0.0], DelayMode::Sampled(&draws)).unwrap();
        }
        let mean = sum / n as f64;
        assert!(
            (mean - 666.666_666e-6).abs() < 0.01 * 666.666_666e-6,
            "{mean}"
        );
    }

    #[test]
    fn short_sub_chains_skip_relay_branch() {
        // Vehicle 2: direct or brake lights of vehicle 1. A huge relay
        // advantage through vehicle 1 would be wrong here.
        let slot = 1e-3;
        let q = vec![
            vec![0.0, 1.0, 1e-3, 1e-3],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0; 4],
        ];
        let t = HopTable::from_probabilities(slot, q);
        let tau = [0.0, 0.5, 0.5, 0.5];
        let d2 = reception_delay(&t, 2, &tau, DelayMode::Expected).unwrap();
        // min(direct 1 s, direct(1) + τ_1 = 0.501 s)
        assert!((d2 - 0.501).abs() < 1e-12, "{d2}");
        let d3 = reception_delay(&t, 3, &tau, DelayMode::Expected).unwrap();
        // relay through 1: 0.001 + 0.5 + 0.001
        assert!((d3 - 0.502).abs() < 1e-12, "{d3}");
    }

    #[test]
    fn geometric_inversion() {
        assert_eq!(geometric_attempts(0.3, 1.0), Some(1));
        assert_eq!(geometric_attempts(0.3, 0.0), None);
        assert_eq!(geometric_attempts(1.0, 0.2), Some(1));
        // P(G > k) = (1-q)^k: u = 0.5^3 exactly at q = 0.5 gives 3.
        assert_eq!(geometric_attempts(0.125, 0.5), Some(3));
        assert_eq!(geometric_attempts(1e-300, 1e-9), None);
    }

    #[test]
    fn draws_have_fixed_shape() {
        let mut a = ChaCha8Rng::seed_from_u64(8);
        let d = AttemptDraws::draw(&mut a, 6);
        assert_eq!(d.direct.len(), 6);
        assert_eq!(d.relay.iter().map(Vec::len).sum::<usize>(), 1 + 2 + 3);
        assert!(d.direct.iter().all(|&u| u > 0.0 && u <= 1.0));
    }

    #[test]
    fn access_grid_values() {
        let g = access_grid(0.01, 0.20, 0.01);
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[19], 0.2);
        assert_eq!(g[6], 0.07);
    }

    #[test]
    fn scenario_validation() {
        let bad = ChainScenario {
            obstructions: 25,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Validation(_))));
        let bad = ChainScenario {
            access: 1.2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ChainScenario {
            fading: FadingModel::NoFading,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(ChainScenario::default().validate().is_ok());
    }

    #[test]
    fn fixed_sensing_radius_below_floor_errors() {
        let sc = ChainScenario {
            scheme: Scheme::CarrierSense,
            sensing_radius: SensingRadius::Fixed(30.0),
            ..Default::default()
        };
        assert!(matches!(
            LinkTables::build(&sc),
            Err(Error::CsBelowValidity { .. })
        ));
    }

    #[test]
    fn hop_success_independent_matches_closed_form() {
        let sc = ChainScenario {
            access: 0.1,
            ..Default::default()
        };
        let t = HopTable::build(&sc, 4).unwrap();
        // Hop 0 -> 2 with interferers 1 and 3 at 25 m from the receiver.
        let p_async = 2.0 * 0.1 - 0.01;
        let f = 1.0 - p_async + p_async / (1.0 + sc.beta * 4.0);
        let want = f * f * 0.1 * 0.9;
        assert!((t.q(0, 2) - want).abs() < 1e-15);
    }

    #[test]
    fn hop_success_carrier_sense_optimal() {
        let sc = ChainScenario {
            access: 0.1,
            scheme: Scheme::CarrierSense,
            ..Default::default()
        };
        let t = HopTable::build(&sc, 6).unwrap();
        // r = 25, r_I ≈ 98.6, r_CS ≈ 123.6: vehicles 2..=5 within 125 m of
        // the head? Distances 50, 75, 100, 125: the last one lies outside.
        let want = 0.1 * 0.9f64.powi(3) * 0.9;
        assert!((t.q(0, 1) - want).abs() < 1e-15, "{}", t.q(0, 1));
    }

    #[test]
    fn trial_is_deterministic() {
        let sc = ChainScenario::default();
        let tables = LinkTables::build(&sc).unwrap();
        let a = run_trial(&sc, &tables, 42, 7).unwrap();
        let b = run_trial(&sc, &tables, 42, 7).unwrap();
        assert_eq!(a, b);
        let bits = |o: &TrialOutcome| {
            o.brake_onset_times
                .iter()
                .map(|t| t.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn silent_channel_reduces_to_brake_light_chain() {
        let sc = ChainScenario {
            access: 0.0,
            ..Default::default()
        };
        let tables = LinkTables::build(&sc).unwrap();
        for trial in 0..50 {
            let draws = TrialDraws::sample(&sc, &mut trial_rng(3, trial));
            let out = run_trial_with(&sc, &tables, &draws).unwrap();
            let mut t = 0.0;
            for i in 1..sc.vehicles {
                t += draws.reaction[i];
                assert!((out.brake_onset_times[i] - t).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn instant_reaction_never_collides() {
        let sc = ChainScenario {
            access: 0.0,
            reaction: ReactionLaw {
                mu: -50.0,
                sigma: 0.0,
            },
            ..Default::default()
        };
        let est = estimate_collision_probability(&sc, 500, 5, 2).unwrap();
        assert_eq!(est.mean, 0.0);
    }

    #[test]
    fn certain_collisions_give_unit_mean() {
        let sc = ChainScenario {
            vehicles: 6,
            obstructions: 1,
            spacing: 0.01,
            access: 0.0,
            reaction: ReactionLaw {
                mu: 5f64.ln(),
                sigma: 0.0,
            },
            ..Default::default()
        };
        let est = estimate_collision_probability(&sc, 200, 5, 2).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.ci_halfwidth, 0.0);
    }

    #[test]
    fn pooled_tallies_match() {
        let sc = ChainScenario::default();
        let tables = LinkTables::build(&sc).unwrap();
        let a = tally_trials(&sc, &tables, 9, 0, 300).unwrap();
        let b = tally_trials(&sc, &tables, 9, 300, 300).unwrap();
        let all = tally_trials(&sc, &tables, 9, 0, 600).unwrap();
        assert_eq!(a.merge(b), all);
        let (ea, eb, e) = (a.estimate(25), b.estimate(25), all.estimate(25));
        assert!(((ea.mean + eb.mean) / 2.0 - e.mean).abs() < 1e-12);
    }

    #[test]
    fn worker_count_does_not_change_estimate() {
        let sc = ChainScenario::default();
        let one = estimate_collision_probability(&sc, 400, 11, 1).unwrap();
        let four = estimate_collision_probability(&sc, 400, 11, 4).unwrap();
        assert_eq!(one.mean.to_bits(), four.mean.to_bits());
        assert_eq!(one.ci_halfwidth.to_bits(), four.ci_halfwidth.to_bits());
    }

    /// Three vehicles, brake lights only, integrated with small time steps.
    fn stepped_three_car_collisions(
        decel: &[f64; 3],
        onset: &[f64; 3],
        spacing: f64,
        v0: f64,
    ) -> usize {
        let dt = 1e-3;
        let mut x = [0.0, -spacing, -2.0 * spacing];
        let mut v = [v0; 3];
        let mut frozen = [false; 3];
        let mut hits = 0;
        let mut t = 0.0;
        while (0..3).any(|i| !frozen[i] && v[i] > 0.0) {
            for i in 0..3 {
                if frozen[i] {
                    continue;
                }
                let a = if t >= onset[i] { decel[i] } else { 0.0 };
                let nv = (v[i] - a * dt).max(0.0);
                x[i] += 0.5 * (v[i] + nv) * dt;
                v[i] = nv;
            }
            for i in 1..3 {
                if !frozen[i] && x[i] >= x[i - 1] {
                    hits += 1;
                    x[i] = x[i - 1];
                    frozen[i] = true;
                    frozen[i - 1] = true;
                    v[i] = 0.0;
                    v[i - 1] = 0.0;
                }
            }
            t += dt;
        }
        hits
    }

    #[test]
    fn three_car_chain_matches_stepped_oracle() {
        use rand_distr::StandardNormal;
        let sc = ChainScenario {
            vehicles: 3,
            obstructions: 0,
            access: 0.0,
            ..Default::default()
        };
        let trials = 10_000;
        let est = estimate_collision_probability(&sc, trials, 21, 0).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..trials {
            let decel: [f64; 3] = std::array::from_fn(|_| rng.gen_range(6.0..=9.0));
            let tau: [f64; 3] = std::array::from_fn(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (0.17 + 0.44 * z).exp()
            });
            let onset = [0.0, tau[1], tau[1] + tau[2]];
            let frac = stepped_three_car_collisions(&decel, &onset, 25.0, 20.0) as f64 / 2.0;
            sum += frac;
            sum_sq += frac * frac;
        }
        let t = trials as f64;
        let mean = sum / t;
        let var = (sum_sq - t * mean * mean) / (t - 1.0);
        let ci = 1.96 * (var / t).sqrt();
        assert!(
            (mean - est.mean).abs() <= ci + est.ci_halfwidth,
            "oracle {mean} ± {ci}, simulator {} ± {}",
            est.mean,
            est.ci_halfwidth
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn slower_reactions_never_reduce_collisions(
                seed in any::<u64>(),
                shift in 0.0f64..2.0,
                p in 0.0f64..0.3,
            ) {
                let sc = ChainScenario { access: p, ..Default::default() };
                let tables = LinkTables::build(&sc).unwrap();
                let draws = TrialDraws::sample(&sc, &mut trial_rng(seed, 0));
                let mut slower = draws.clone();
                slower.reaction.iter_mut().for_each(|t| *t += shift);
                let a = run_trial_with(&sc, &tables, &draws).unwrap();
                let b = run_trial_with(&sc, &tables, &slower).unwrap();
                prop_assert!(b.collided_vehicle_count >= a.collided_vehicle_count);
            }

            #[test]
            fn estimates_are_probabilities(seed in any::<u64>(), p in 0.0f64..1.0) {
                let sc = ChainScenario { access: p, vehicles: 8, obstructions: 2, ..Default::default() };
                let est = estimate_collision_probability(&sc, 20, seed, 1).unwrap();
                prop_assert!((0.0..=1.0).contains(&est.mean));
                prop_assert!(est.ci_halfwidth >= 0.0);
            }
        }
    }
}
