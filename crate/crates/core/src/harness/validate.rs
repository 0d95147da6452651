//! Cross-checks of the analytic evaluators against independent references.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain_kinematics::{max_safe_brake_delay, pairwise_collision_time, VehicleMotion};
use crate::mac_analytics::{
    ps_enumeration_oracle, ps_nakagami_mc, ps_rayleigh_exact, Interferer, LinkScenario,
};
use crate::propagation::{interference_radius, FadingModel, PathLoss};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn random_link<R: Rng + ?Sized>(
    rng: &mut R,
    max_interferers: usize,
    fading: FadingModel,
) -> LinkScenario {
    let n = rng.gen_range(0..=max_interferers);
    LinkScenario {
        distance: rng.gen_range(10.0..100.0),
        interferers: (0..n)
            .map(|_| Interferer {
                distance: rng.gen_range(15.0..400.0),
                access: rng.gen_range(0.0..1.0),
            })
            .collect(),
        beta: rng.gen_range(1.0..30.0),
        path_loss: PathLoss::new(rng.gen_range(1.5..4.0)).expect("exponent above 1"),
        fading,
    }
}

/// Gap between two equal-deceleration vehicles, leader braking at 0 and
/// follower at `delay`, written out piecewise.
fn equal_decel_gap(gap: f64, v0: f64, a: f64, delay: f64, t: f64) -> f64 {
    let travel = |t: f64| {
        let t = t.clamp(0.0, v0 / a);
        v0 * t - 0.5 * a * t * t
    };
    let lead = gap + travel(t);
    let follow = if t < delay {
        v0 * t
    } else {
        v0 * delay + travel(t - delay)
    };
    lead - follow
}

/// Random equal-deceleration pairs against the stop-distance closed form;
/// contact times against bisection on the gap. Returns mismatches.
pub fn kinematic_mismatches(pairs: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = Vec::new();
    for _ in 0..pairs {
        let gap = rng.gen_range(1.0..60.0);
        let v0 = rng.gen_range(5.0..35.0);
        let a = rng.gen_range(3.0..10.0);
        let delay = rng.gen_range(0.0..3.0);
        let leader = VehicleMotion {
            x0: gap,
            v0,
            decel: a,
            brake_onset: 0.0,
        };
        let follower = VehicleMotion {
            x0: 0.0,
            v0,
            decel: a,
            brake_onset: delay,
        };
        let expect_hit = v0 * delay > gap;
        let got = pairwise_collision_time(&leader, &follower);
        if got.is_some() != expect_hit {
            bad.push(format!(
                "gap {gap} v0 {v0} a {a} delay {delay}: expected hit = {expect_hit}"
            ));
            continue;
        }
        if (max_safe_brake_delay(gap, v0, a, a) - gap / v0).abs() > 1e-12 {
            bad.push(format!("safe delay mismatch at gap {gap} v0 {v0}"));
        }
        if let Some(t) = got {
            // The gap never grows, so the first zero can be bracketed.
            let (mut lo, mut hi) = (0.0, delay + v0 / a);
            while hi - lo > 1e-12 {
                let mid = 0.5 * (lo + hi);
                if equal_decel_gap(gap, v0, a, delay, mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            if (t - hi).abs() > 1e-9 {
                bad.push(format!("contact at {t}, bisection {hi}"));
            }
        }
    }
    bad
}

/// The suite behind the `validate` subcommand.
pub fn run_validation(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let s = random_link(&mut rng, 12, FadingModel::RAYLEIGH);
        let a = ps_rayleigh_exact(&s).expect("valid scenario");
        let b = ps_enumeration_oracle(&s).expect("valid scenario");
        worst = worst.max((a - b).abs());
    }
    checks.push(Check {
        name: "rayleigh closed form vs enumeration",
        passed: worst <= 1e-12,
        detail: format!("50 scenarios, max |diff| = {worst:.3e}"),
    });

    let mut within = 0;
    for _ in 0..50 {
        let s = random_link(&mut rng, 8, FadingModel::RAYLEIGH);
        let exact = ps_rayleigh_exact(&s).expect("valid scenario");
        let mc = ps_nakagami_mc(&s, 20_000, &mut rng).expect("valid scenario");
        if (mc.value - exact).abs() <= 4.0 * mc.std_error.max(1e-12) {
            within += 1;
        }
    }
    checks.push(Check {
        name: "m = 1 sampling vs closed form",
        passed: within >= 48,
        detail: format!("{within}/50 within 4 standard errors"),
    });

    let mut radius_err: f64 = 0.0;
    for alpha in [1.5, 2.0, 3.0, 4.0] {
        let pl = PathLoss::new(alpha).expect("exponent above 1");
        let r_i = interference_radius(25.0, 4.0, pl, FadingModel::RAYLEIGH).expect("valid radius");
        let x = std::f64::consts::PI / alpha;
        let csc_form = 25.0 * 4f64.powf(1.0 / alpha) * x / x.sin();
        radius_err = radius_err.max((r_i / csc_form - 1.0).abs());
    }
    checks.push(Check {
        name: "rayleigh interference radius vs csc form",
        passed: radius_err <= 1e-12,
        detail: format!("max relative error {radius_err:.3e}"),
    });

    let bad = kinematic_mismatches(1000, seed);
    checks.push(Check {
        name: "equal-deceleration kinematics vs closed form",
        passed: bad.is_empty(),
        detail: bad
            .first()
            .cloned()
            .unwrap_or_else(|| "1000 pairs agree".into()),
    });
    checks
}
