//! Point-vehicle braking kinematics and rear-end collision detection.
//!
//! Every vehicle cruises at `v0` until its brake onset, then decelerates at
//! a constant rate until it stops. Trajectories are piecewise quadratic, so
//! collisions are found exactly by solving one quadratic per segment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gap (meters) at or below which two vehicles are in contact.
pub const CONTACT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleMotion {
    /// Initial position; the vehicle ahead has the larger value.
    pub x0: f64,
    pub v0: f64,
    /// Deceleration magnitude, m/s².
    pub decel: f64,
    /// Brake onset time; `f64::INFINITY` if the vehicle never brakes.
    pub brake_onset: f64,
}

impl VehicleMotion {
    pub fn stop_time(&self) -> f64 {
        self.brake_onset + self.v0 / self.decel
    }

    pub fn position_at(&self, t: f64) -> f64 {
        if t < self.brake_onset {
            self.x0 + self.v0 * t
        } else {
            let cruise = self.x0 + self.v0 * self.brake_onset;
            let dt = (t - self.brake_onset).min(self.v0 / self.decel);
            cruise + self.v0 * dt - 0.5 * self.decel * dt * dt
        }
    }

    pub fn velocity_at(&self, t: f64) -> f64 {
        if t < self.brake_onset {
            self.v0
        } else if t >= self.stop_time() {
            0.0
        } else {
            (self.v0 - self.decel * (t - self.brake_onset)).max(0.0)
        }
    }

    /// Signed acceleration in force on `[t, t + dt)` for small `dt`.
    fn acceleration_from(&self, t: f64) -> f64 {
        if t >= self.brake_onset && t < self.stop_time() {
            -self.decel
        } else {
            0.0
        }
    }
}

/// A motion that may be cut short by an impact.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Trajectory {
    motion: VehicleMotion,
    /// `(time, position)` from which the vehicle is stationary.
    freeze: Option<(f64, f64)>,
}

impl Trajectory {
    fn new(motion: VehicleMotion) -> Self {
        Trajectory {
            motion,
            freeze: None,
        }
    }

    fn frozen(&self, t: f64) -> Option<f64> {
        self.freeze.filter(|&(ft, _)| t >= ft).map(|(_, x)| x)
    }

    fn position_at(&self, t: f64) -> f64 {
        self.frozen(t).unwrap_or_else(|| self.motion.position_at(t))
    }

    fn velocity_at(&self, t: f64) -> f64 {
        if self.frozen(t).is_some() {
            0.0
        } else {
            self.motion.velocity_at(t)
        }
    }

    fn acceleration_from(&self, t: f64) -> f64 {
        if self.frozen(t).is_some() {
            0.0
        } else {
            self.motion.acceleration_from(t)
        }
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        out.push(self.motion.brake_onset);
        out.push(self.motion.stop_time());
        if let Some((t, _)) = self.freeze {
            out.push(t);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    /// Index of the rear vehicle.
    pub follower_index: usize,
    pub time: f64,
}

/// Earliest time the follower reaches the leader, if ever.
pub fn pairwise_collision_time(leader: &VehicleMotion, follower: &VehicleMotion) -> Option<f64> {
    first_contact(&Trajectory::new(*leader), &Trajectory::new(*follower))
}

fn first_contact(leader: &Trajectory, follower: &Trajectory) -> Option<f64> {
    let mut cuts = vec![0.0];
    leader.breakpoints(&mut cuts);
    follower.breakpoints(&mut cuts);
    cuts.retain(|t| t.is_finite() && *t >= 0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.push(f64::INFINITY);

    for w in cuts.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let g0 = leader.position_at(t0) - follower.position_at(t0);
        let g1 = leader.velocity_at(t0) - follower.velocity_at(t0);
        let g2 = 0.5 * (leader.acceleration_from(t0) - follower.acceleration_from(t0));
        if let Some(tau) = first_root(g0 - CONTACT_EPS, g1, g2, t1 - t0) {
            // The slack decides contact; the time is where the gap closes,
            // unless the vehicles only graze within the slack.
            let exact = first_root(g0, g1, g2, t1 - t0).unwrap_or(tau);
            return Some(t0 + exact);
        }
    }
    None
}

/// Smallest `τ ∈ [0, len]` with `c0 + c1 τ + c2 τ² <= 0`.
fn first_root(c0: f64, c1: f64, c2: f64, len: f64) -> Option<f64> {
    if c0 <= 0.0 {
        return Some(0.0);
    }
    let in_range = |t: f64| t >= 0.0 && t <= len;
    if c2 == 0.0 {
        if c1 < 0.0 {
            let t = -c0 / c1;
            return in_range(t).then_some(t);
        }
        return None;
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        // Grazing lost to rounding: accept the vertex if it touches.
        let vertex = -c1 / (2.0 * c2);
        if c2 > 0.0 && in_range(vertex) {
            let v = c0 + c1 * vertex + c2 * vertex * vertex;
            if v <= 0.0 {
                return Some(vertex);
            }
        }
        return None;
    }
    let sq = disc.sqrt();
    // Stable pair of roots.
    let q = -0.5 * (c1 + c1.signum() * sq);
    let mut roots = [q / c2, if q != 0.0 { c0 / q } else { f64::NAN }];
    roots.sort_by(f64::total_cmp);
    roots.into_iter().find(|&t| in_range(t))
}

/// Runs the chain. Index 0 is the front vehicle.
///
/// Contacts are resolved in time order. On impact both vehicles stop where
/// they touch and every later contact is computed against the stopped
/// positions. A vehicle struck from behind before reaching its own leader
/// therefore never makes that later impact.
pub fn simulate_chain(motions: &[VehicleMotion]) -> Result<Vec<CollisionEvent>> {
    for i in 1..motions.len() {
        if motions[i].x0 >= motions[i - 1].x0 {
            return Err(Error::OverlapAtStart(i));
        }
    }
    let n = motions.len();
    let mut traj: Vec<Trajectory> = motions.iter().copied().map(Trajectory::new).collect();
    let mut done = vec![false; n];
    // Pending contact time of vehicle i into vehicle i-1.
    let mut pending: Vec<Option<f64>> = (0..n)
        .map(|i| {
            (i > 0)
                .then(|| first_contact(&traj[i - 1], &traj[i]))
                .flatten()
        })
        .collect();
    let mut events = Vec::new();

    loop {
        let next = pending
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (i, t)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let Some((i, tc)) = next else { break };

        let x = traj[i - 1].position_at(tc);
        traj[i].freeze = Some((tc, x));
        if traj[i - 1].frozen(tc).is_none() {
            traj[i - 1].freeze = Some((tc, x));
        }
        done[i] = true;
        pending[i] = None;
        events.push(CollisionEvent {
            follower_index: i,
            time: tc,
        });

        for k in [i - 1, i + 1] {
            if k >= 1 && k < n && !done[k] {
                pending[k] = first_contact(&traj[k - 1], &traj[k]);
            }
        }
    }
    Ok(events)
}

/// Largest brake delay behind a leader braking at `t = 0` that still
/// avoids a collision. Zero if even simultaneous braking collides.
pub fn max_safe_brake_delay(gap: f64, v0: f64, leader_decel: f64, follower_decel: f64) -> f64 {
    if gap <= 0.0 {
        return 0.0;
    }
    if leader_decel == follower_decel {
        return gap / v0;
    }
    let collides = |delay: f64| {
        let leader = VehicleMotion {
            x0: gap,
            v0,
            decel: leader_decel,
            brake_onset: 0.0,
        };
        let follower = VehicleMotion {
            x0: 0.0,
            v0,
            decel: follower_decel,
            brake_onset: delay,
        };
        pairwise_collision_time(&leader, &follower).is_some()
    };
    if collides(0.0) {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = (gap + v0 * v0 / (2.0 * leader_decel)) / v0 + 1.0;
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if collides(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Number of packet transmissions of `bits` that fit in `window` seconds
/// at `rate` bits/s.
pub fn transmission_budget(window: f64, rate: f64, bits: f64) -> u64 {
    let slots = window * rate / bits;
    // Rounding slack so that an exact multiple is not lost.
    (slots * (1.0 + 1e-12)).floor().max(0.0) as u64
}
