//! Randomized property checks over the coordinate tower and the flows.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coords::*;
use crate::error::Result;
use crate::inner::{plug_back_residual, solve_branch, InnerKind, InnerPath, InnerSeries};
use crate::numerics::ode::{integrate_sampled, IntegratorConfig};
use crate::pendulum::{hamiltonian_pend, Branch, PendulumState, SeparatrixHandle};
use crate::rpc3bp::{field, flow, hamiltonian_h, involution_phi, CartesianState, MuParam};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub value: f64,
    /// Inclusive acceptance interval for `value`.
    pub bounds: (f64, f64),
    pub passed: bool,
}

impl PropertyCheck {
    fn new(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            bounds: (lo, hi),
            passed: value >= lo && value <= hi,
        }
    }

    fn at_most(name: &str, value: f64, tol: f64) -> Self {
        Self::new(name, value, 0.0, tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub samples: usize,
    pub seed: u64,
    pub checks: Vec<PropertyCheck>,
    pub all_passed: bool,
}

impl CheckSummary {
    fn new(samples: usize, seed: u64, checks: Vec<PropertyCheck>) -> Self {
        let all_passed = checks.iter().all(|c| c.passed);
        Self {
            samples,
            seed,
            checks,
            all_passed,
        }
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn near_circular(rng: &mut ChaCha8Rng) -> PolarState {
    PolarState::new(
        rng.random_range(0.8..1.3),
        rng.random_range(-3.0..3.0),
        rng.random_range(-0.1..0.1),
        rng.random_range(0.9..1.1),
    )
}

fn polar_err(a: &PolarState, b: &PolarState) -> f64 {
    (a.r - b.r)
        .abs()
        .max(wrap_angle(a.theta - b.theta).abs())
        .max((a.big_r - b.big_r).abs())
        .max((a.g - b.g).abs())
}

fn series_ratio() -> Result<f64> {
    let resid = |a: f64| -> Result<f64> {
        let ps = PoincareState {
            lambda: 0.8,
            big_l: 1.0 + a,
            eta: Complex64::new(0.6 * a, -0.9 * a),
            xi: Complex64::new(0.6 * a, 0.9 * a),
        };
        let p = poincare_to_polar(&ps)?;
        let (r, th, rr, _) = poincare_series_first_order(&ps);
        Ok((p.r - r).abs().max((p.theta - th).abs()).max((p.big_r - rr).abs()))
    };
    Ok(resid(2e-3)? / resid(1e-3)?)
}

/// Round trips through every coordinate change, the first-order series
/// scaling and the G identity, on `samples` seeded random states.
pub fn coordinate_checks(samples: usize, seed: u64) -> Result<CheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = MuParam::new(1e-3)?;
    let shift = EquilibriumShift::new(&m)?;
    let handle = SeparatrixHandle::standard()?;
    let mut e = [0.0f64; 7];
    for _ in 0..samples {
        let c = CartesianState::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        if c.q1.hypot(c.q2) > 1e-3 {
            let back = polar_to_cart(&cart_to_polar(&c)?)?;
            e[0] = e[0].max(back.dist(&c));
        }

        let p = near_circular(&mut rng);
        let ps = polar_to_poincare(&p)?;
        e[1] = e[1].max(polar_err(&poincare_to_polar(&ps)?, &p));
        e[2] = e[2].max((ps.big_l - (ps.eta * ps.xi).re - p.g).abs());

        let delta = rng.random_range(0.05..0.3);
        let back = unscale(&scale(&ps, delta)?);
        e[3] = e[3]
            .max((back.big_l - ps.big_l).abs())
            .max((back.eta - ps.eta).norm())
            .max((back.xi - ps.xi).norm());

        let cart = polar_to_cart(&p)?;
        let back = scaled_to_cart(&cart_to_scaled(&cart, &m)?)?;
        e[4] = e[4].max(back.dist(&cart));

        let ss = cart_to_scaled(&cart, &m)?;
        let back = shift.unshift(&shift.shift(&ss));
        e[5] = e[5]
            .max((back.lambda - ss.lambda).abs())
            .max((back.big_lambda - ss.big_lambda).abs())
            .max((back.x - ss.x).norm());

        let u = rng.random_range(0.2..8.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let x = Complex64::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
        let sc = SeparatrixCoordState {
            u,
            w: rng.random_range(-0.05..0.05),
            x,
            y: x.conj(),
        };
        let ss = from_separatrix_coords(&sc, &handle, m.delta)?;
        let branch = if u > 0.0 { Branch::Stable } else { Branch::Unstable };
        let back = to_separatrix_coords(&ss, &handle, branch, DEFAULT_U_FLOOR)?;
        e[6] = e[6].max((back.u - sc.u).abs() * handle.big_lambda_h(u).abs()).max((back.w - sc.w).abs());
    }
    let checks = vec![
        PropertyCheck::at_most("cartesian-polar round trip", e[0], 1e-12),
        PropertyCheck::at_most("polar-poincare round trip", e[1], 1e-12),
        PropertyCheck::at_most("G = L - eta xi", e[2], 1e-13),
        PropertyCheck::at_most("poincare-scaled round trip", e[3], 1e-12),
        PropertyCheck::at_most("cartesian-scaled round trip", e[4], 1e-12),
        PropertyCheck::at_most("equilibrium shift round trip", e[5], 1e-12),
        PropertyCheck::at_most("separatrix coordinates round trip", e[6], 1e-12),
        PropertyCheck::new("series residual ratio under amplitude halving", series_ratio()?, 3.0, 5.0),
    ];
    Ok(CheckSummary::new(samples, seed, checks))
}

/// Closest approach to the small primary admitted in the flow samples.
pub const MIN_ENCOUNTER: f64 = 0.05;

/// Energy conservation, the reversibility identity, the separatrix energy pin
/// and the inner plug-back residual. Flow samples whose orbit passes within
/// [`MIN_ENCOUNTER`] of the small primary during [0, 50] are redrawn.
pub fn dynamics_checks(samples: usize, seed: u64) -> Result<CheckSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = MuParam::new(1e-3)?;
    let cfg = IntegratorConfig::with_tol(1e-13, 1e-15);
    let times: Vec<f64> = (1..=2500).map(|k| 0.02 * k as f64).collect();
    let (mut energy, mut reversal) = (0.0f64, 0.0f64);
    let mut accepted = 0;
    while accepted < samples {
        let p = PolarState::new(
            rng.random_range(0.9..1.2),
            rng.random_range(0.5..5.5),
            rng.random_range(-0.05..0.05),
            rng.random_range(0.95..1.1),
        );
        let t = rng.random_range(1.0..10.0);
        let s = polar_to_cart(&p)?;
        // close encounters put the energy at the round-off floor of the 1/r terms
        let orbit = integrate_sampled(|_, y: &[f64; 4]| field(y, m.mu), 0.0, s.to_array(), &times, &cfg)?;
        if orbit.iter().any(|y| (y[0] - m.mu + 1.0).hypot(y[1]) < MIN_ENCOUNTER) {
            continue;
        }
        accepted += 1;
        let h0 = hamiltonian_h(&s, &m)?;
        let end = CartesianState::from_array(orbit[orbit.len() - 1]);
        energy = energy.max((hamiltonian_h(&end, &m)? - h0).abs());
        let lhs = involution_phi(&flow(&s, t, &m, &cfg)?);
        let rhs = flow(&involution_phi(&s), -t, &m, &cfg)?;
        reversal = reversal.max(lhs.dist(&rhs));
    }
    let handle = SeparatrixHandle::standard()?;
    let mut pin = 0.0f64;
    for k in 0..=300 {
        let t = -15.0 + 0.1 * k as f64;
        let s = handle.sample(t);
        let h = hamiltonian_pend(&PendulumState {
            lambda: s.lambda_h,
            big_lambda: s.big_lambda_h,
        })?;
        pin = pin.max((h + 0.5).abs());
    }
    let series = InnerSeries::compute(130)?;
    let path = InnerPath::new(10.0, 40.0);
    let pts: Vec<f64> = (0..12).map(|k| -30.0 + 3.0 * k as f64).collect();
    let sol = solve_branch(InnerKind::Unstable, &path, &series, &pts)?;
    let plug = plug_back_residual(&sol, &path)?;
    let checks = vec![
        PropertyCheck::at_most("energy drift over t in [0, 50]", energy, 1e-10),
        PropertyCheck::at_most("reversibility flow identity", reversal, 1e-9),
        PropertyCheck::at_most("separatrix energy pin", pin, 1e-10),
        PropertyCheck::at_most("inner plug-back residual", plug, 10.0 * path.integrator.rel_tol),
    ];
    Ok(CheckSummary::new(samples, seed, checks))
}
