//! The averaged slow system: potential, pendulum Hamiltonian, separatrix,
//! the singularity constant A and the split of the scaled Hamiltonian.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::coords::{scaled_to_cart, unscale, ScaledState};
use crate::error::{Error, Result};
use crate::numerics::ode::{integrate, integrate_sampled, IntegratorConfig};
use crate::numerics::quad::{tanh_sinh, QuadratureSpec, Singular};
use crate::numerics::roots::{brent, RootTol};
use crate::rpc3bp::MuParam;

/// λ0 = arccos(1/2 − √2), the turning point of the separatrix.
pub fn lambda0() -> f64 {
    (0.5 - SQRT_2).acos()
}

/// Saddle rate ν = √(21/8).
pub fn saddle_rate() -> f64 {
    (21.0f64 / 8.0).sqrt()
}

fn check_angle(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || (lambda.abs() - PI).abs() < 1e-300 || (lambda / 2.0).cos() == 0.0 {
        return Err(Error::Domain(format!("λ = {lambda} is a collision with the small primary")));
    }
    Ok(())
}

/// V(λ) + 1/2 in a form without cancellation near λ = 0.
fn v_plus_half_raw(lambda: f64) -> f64 {
    let s2 = (0.5 * lambda).sin();
    let s4 = (0.25 * lambda).sin();
    2.0 * s2 * s2 - s4 * s4 / (0.5 * lambda).cos().abs()
}

/// V(λ) = 1 − cos λ − 1/√(2 + 2cos λ).
pub fn potential_v(lambda: f64) -> Result<f64> {
    check_angle(lambda)?;
    Ok(v_plus_half_raw(lambda) - 0.5)
}

pub fn potential_v_plus_half(lambda: f64) -> Result<f64> {
    check_angle(lambda)?;
    Ok(v_plus_half_raw(lambda))
}

fn dv_raw(lambda: f64) -> f64 {
    let c2 = 2.0 * (0.5 * lambda).cos().abs();
    lambda.sin() * (1.0 - c2.powi(-3))
}

/// V′(λ) = sin λ (1 − (2 + 2cos λ)^{−3/2}).
pub fn potential_dv(lambda: f64) -> Result<f64> {
    check_angle(lambda)?;
    Ok(dv_raw(lambda))
}

/// V″(λ) = cos λ (1 − (2+2cos λ)^{−3/2}) − 3 sin²λ (2+2cos λ)^{−5/2}.
pub fn potential_d2v(lambda: f64) -> Result<f64> {
    check_angle(lambda)?;
    let c2 = 2.0 * (0.5 * lambda).cos().abs();
    let s = lambda.sin();
    Ok(lambda.cos() * (1.0 - c2.powi(-3)) - 3.0 * s * s * c2.powi(-5))
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumState {
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
}

/// H_pend = −(3/2)Λ² + V(λ).
pub fn hamiltonian_pend(s: &PendulumState) -> Result<f64> {
    Ok(-1.5 * s.big_lambda * s.big_lambda + potential_v(s.lambda)?)
}

/// (λ̇, Λ̇) = (−3Λ, −V′(λ)).
pub fn pendulum_rhs(s: &PendulumState) -> Result<PendulumState> {
    Ok(PendulumState {
        lambda: -3.0 * s.big_lambda,
        big_lambda: -potential_dv(s.lambda)?,
    })
}

fn rhs_array(y: &[f64; 2]) -> [f64; 2] {
    [-3.0 * y[1], -dv_raw(y[0])]
}

/// Eigenvalues ±√(3 V″(0)) of the saddle at the origin.
pub fn saddle_eigenvalues() -> Result<(f64, f64)> {
    let nu = (3.0 * potential_d2v(0.0)?).sqrt();
    Ok((nu, -nu))
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixSample {
    pub t: f64,
    pub lambda_h: f64,
    #[serde(rename = "Lambda_h")]
    pub big_lambda_h: f64,
}

/// Λ_h as a function of λ on the t > 0 half: √((2/3)(V + 1/2)).
fn lambda_of_angle(lambda: f64) -> f64 {
    ((2.0 / 3.0) * v_plus_half_raw(lambda)).max(0.0).sqrt()
}

/// Where the two-dimensional integration from the turning point hands over to
/// the energy-pinned one-dimensional flow.
const HANDOVER: f64 = 1.0;

fn head_cfg() -> IntegratorConfig {
    IntegratorConfig::with_tol(1e-13, 1e-15)
}

// λ_h never vanishes on the tail, so a purely relative control tracks its decay.
fn tail_cfg() -> IntegratorConfig {
    IntegratorConfig::with_tol(1e-13, 1e-300)
}

/// Separatrix point at time `t`, by direct integration.
///
/// Near the turning point the planar pendulum field is integrated; beyond
/// |t| = 1 the angle follows λ̇ = −3Λ_h(λ) on the energy level −1/2, which
/// is contracting toward the saddle and therefore stable to integrate.
pub fn separatrix(t: f64) -> Result<SeparatrixSample> {
    if !t.is_finite() {
        return Err(Error::Invalid("separatrix time must be finite".into()));
    }
    let tau = t.abs();
    let head = integrate(|_, y: &[f64; 2]| rhs_array(y), 0.0, tau.min(HANDOVER), [lambda0(), 0.0], &head_cfg())?;
    let (lam, big) = if tau <= HANDOVER {
        (head.y[0], head.y[1])
    } else {
        let tail = integrate(
            |_, y: &[f64; 1]| [-3.0 * lambda_of_angle(y[0])],
            HANDOVER,
            tau,
            [head.y[0]],
            &tail_cfg(),
        )?;
        (tail.y[0], lambda_of_angle(tail.y[0]))
    };
    Ok(SeparatrixSample {
        t,
        lambda_h: lam,
        big_lambda_h: if t < 0.0 { -big } else { big },
    })
}

/// Which half of the separatrix: u < 0 leaves the saddle (unstable), u > 0 returns (stable).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Unstable,
    Stable,
}

/// Dense table of the separatrix on t ≥ 0, extended by symmetry to t < 0
/// and by the saddle asymptotics beyond the table end.
#[derive(Clone, Debug)]
pub struct SeparatrixHandle {
    step: f64,
    t_max: f64,
    lam: Vec<f64>,
    big: Vec<f64>,
}

impl SeparatrixHandle {
    pub fn new(t_max: f64, step: f64) -> Result<Self> {
        if !(t_max > HANDOVER) || !(step > 0.0) || step > 0.1 {
            return Err(Error::Invalid(format!(
                "separatrix table needs t_max > {HANDOVER} and 0 < step <= 0.1 (got {t_max}, {step})"
            )));
        }
        let n = (t_max / step).round() as usize;
        let m = (HANDOVER / step).round() as usize;
        let head_times: Vec<f64> = (1..=m).map(|i| i as f64 * step).collect();
        let head = integrate_sampled(|_, y: &[f64; 2]| rhs_array(y), 0.0, [lambda0(), 0.0], &head_times, &head_cfg())?;
        let mut lam = Vec::with_capacity(n + 1);
        let mut big = Vec::with_capacity(n + 1);
        lam.push(lambda0());
        big.push(0.0);
        for y in &head {
            lam.push(y[0]);
            big.push(y[1]);
        }
        let t_h = m as f64 * step;
        let tail_times: Vec<f64> = (m + 1..=n).map(|i| i as f64 * step).collect();
        let tail = integrate_sampled(
            |_, y: &[f64; 1]| [-3.0 * lambda_of_angle(y[0])],
            t_h,
            [head[m - 1][0]],
            &tail_times,
            &tail_cfg(),
        )?;
        for y in &tail {
            lam.push(y[0]);
            big.push(lambda_of_angle(y[0]));
        }
        Ok(Self {
            step,
            t_max: n as f64 * step,
            lam,
            big,
        })
    }

    /// The default table: step 1e-3 on |t| ≤ 20.
    pub fn standard() -> Result<Self> {
        Self::new(20.0, 1e-3)
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// (λ_h, Λ_h) for t ≥ 0.
    fn eval_pos(&self, t: f64) -> (f64, f64) {
        let n = self.lam.len() - 1;
        if t >= self.t_max {
            let nu = saddle_rate();
            let l = self.lam[n] * (-nu * (t - self.t_max)).exp();
            return (l, lambda_of_angle(l));
        }
        let s = t / self.step;
        let i = (s.floor() as usize).min(n - 1);
        let h = self.step;
        let th = s - i as f64;
        let (l0, l1) = (self.lam[i], self.lam[i + 1]);
        let (b0, b1) = (self.big[i], self.big[i + 1]);
        let (dl0, dl1) = (-3.0 * b0, -3.0 * b1);
        let (db0, db1) = (-dv_raw(l0), -dv_raw(l1));
        let hm = |y0: f64, y1: f64, d0: f64, d1: f64| {
            let t2 = th * th;
            let t3 = t2 * th;
            (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                + (t3 - 2.0 * t2 + th) * h * d0
                + (-2.0 * t3 + 3.0 * t2) * y1
                + (t3 - t2) * h * d1
        };
        (hm(l0, l1, dl0, dl1), hm(b0, b1, db0, db1))
    }

    pub fn sample(&self, t: f64) -> SeparatrixSample {
        let (l, b) = self.eval_pos(t.abs());
        SeparatrixSample {
            t,
            lambda_h: l,
            big_lambda_h: if t < 0.0 { -b } else { b },
        }
    }

    pub fn lambda_h(&self, t: f64) -> f64 {
        self.eval_pos(t.abs()).0
    }

    pub fn big_lambda_h(&self, t: f64) -> f64 {
        let b = self.eval_pos(t.abs()).1;
        if t < 0.0 {
            -b
        } else {
            b
        }
    }

    /// Solves λ_h(u) = λ on the chosen half.
    pub fn invert(&self, lambda: f64, branch: Branch) -> Result<f64> {
        let l0 = lambda0();
        if !(lambda > 0.0 && lambda <= l0) {
            return Err(Error::Domain(format!("λ = {lambda} is outside the separatrix range (0, λ0]")));
        }
        let sign = match branch {
            Branch::Stable => 1.0,
            Branch::Unstable => -1.0,
        };
        if lambda == l0 {
            return Ok(0.0);
        }
        let n = self.lam.len() - 1;
        let u = if lambda < self.lam[n] {
            self.t_max + (self.lam[n] / lambda).ln() / saddle_rate()
        } else {
            // λ_h is decreasing on t ≥ 0
            let j = self.lam.partition_point(|&v| v > lambda);
            let (a, b) = ((j.max(1) - 1) as f64 * self.step, (j.min(n)) as f64 * self.step);
            if a == b {
                a
            } else {
                brent(|t| self.eval_pos(t).0 - lambda, a, b, RootTol::new(0.0))?
            }
        };
        Ok(sign * u)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AMethod {
    XIntegral,
    LambdaIntegral,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantAResult {
    pub value: f64,
    pub method: AMethod,
    pub error_estimate: f64,
    pub levels: usize,
}

/// Upper limit (√2 − 1)/2 of the x-integral.
pub fn a_upper_limit() -> f64 {
    0.5 * (SQRT_2 - 1.0)
}

/// Integrand of the x-integral, given x and its distance `du` to the upper limit.
pub fn a_x_integrand(x: f64, du: f64) -> f64 {
    // 1 − 4x − 4x² = 4(x₁ − x)(x + x₂) with x₁,₂ = (√2 ∓ 1)/2
    let quad = 4.0 * du * (x + 0.5 * (SQRT_2 + 1.0));
    (2.0 / (1.0 - x)) * (x / (3.0 * (x + 1.0) * quad)).sqrt()
}

pub fn constant_a_x_integral(tol: f64) -> Result<ConstantAResult> {
    constant_a_x_integral_levels(tol, 12)
}

pub fn constant_a_x_integral_levels(tol: f64, max_levels: usize) -> Result<ConstantAResult> {
    let spec = QuadratureSpec::new(0.0, a_upper_limit())
        .singular(Singular::BOTH)
        .tol(tol)
        .levels(max_levels);
    let r = tanh_sinh(|x, _, du| a_x_integrand(x, du), &spec)?;
    Ok(ConstantAResult {
        value: r.value,
        method: AMethod::XIntegral,
        error_estimate: r.error_estimate,
        levels: r.levels,
    })
}

/// Integrand 1/(3 s(λ)) of the λ-integral with s = √(−(2/3)(V + 1/2)),
/// from the distances to λ0 (`dl`) and to π (`du`).
pub fn a_lambda_integrand(lambda: f64, dl: f64, du: f64) -> f64 {
    let l0 = lambda0();
    let c0 = (0.5 * l0).cos();
    let c = (0.5 * du).sin(); // cos(λ/2)
    // with w = 1/(2cos(λ/2)):  −(V + 1/2) = (2 − 1/w)·((w − w0)/w)·(w − 1 + √2)/2
    let rel = 2.0 * (0.25 * (lambda + l0)).sin() * (0.25 * dl).sin() / c0;
    let w = 0.5 / c;
    let minus_v = (2.0 - 2.0 * c) * rel * (w - 1.0 + SQRT_2) * 0.5;
    1.0 / (3.0 * ((2.0 / 3.0) * minus_v).sqrt())
}

pub fn constant_a_lambda_integral(tol: f64) -> Result<ConstantAResult> {
    let spec = QuadratureSpec::new(lambda0(), PI).singular(Singular::BOTH).tol(tol);
    let r = tanh_sinh(a_lambda_integrand, &spec)?;
    Ok(ConstantAResult {
        value: r.value,
        method: AMethod::LambdaIntegral,
        error_estimate: r.error_estimate,
        levels: r.levels,
    })
}

/// F_pend(z) = −1/(2(1+z)²) − (1+z) + 3/2 + (3/2)z², evaluated as z³(4+3z)/(2(1+z)²).
pub fn f_pend(z: f64) -> f64 {
    z * z * z * (4.0 + 3.0 * z) / (2.0 * (1.0 + z) * (1.0 + z))
}

/// The scaled Hamiltonian H = (h + 3/2)/μ evaluated through the coordinate tower.
pub fn scaled_hamiltonian(ss: &ScaledState, m: &MuParam) -> Result<f64> {
    let c = scaled_to_cart(ss)?;
    Ok((crate::rpc3bp::hamiltonian_h(&c, m)? + 1.5) / m.mu)
}

/// H_1^Poi = (h − H_0^Poi)/μ, with the Kepler part and the primaries'
/// perturbation separated to avoid cancellation.
pub fn h1_poincare(ss: &ScaledState, m: &MuParam) -> Result<f64> {
    let ps = unscale(ss);
    let c = scaled_to_cart(ss)?;
    let mu = m.mu;
    let r = c.q1.hypot(c.q2);
    let r1 = (c.q1 - mu).hypot(c.q2);
    let r2 = (c.q1 - mu + 1.0).hypot(c.q2);
    if !(r1 > 0.0 && r2 > 0.0) {
        return Err(Error::Domain("collision with a primary".into()));
    }
    let kepler = 0.5 * (c.p1 * c.p1 + c.p2 * c.p2) - 1.0 / r + 0.5 / (ps.big_l * ps.big_l);
    // (1/r − (1−μ)/r1 − μ/r2)/μ = (1/r − 1/r1)/μ + 1/r1 − 1/r2
    let pert = (mu - 2.0 * c.q1) / (r * r1 * (r + r1)) + 1.0 / r1 - 1.0 / r2;
    Ok(kepler / mu + pert)
}

/// H_1 = H_1^Poi − V(λ) + δ⁻⁴ F_pend(δ²Λ).
pub fn h1_eval(ss: &ScaledState, m: &MuParam) -> Result<f64> {
    let d2 = m.delta * m.delta;
    Ok(h1_poincare(ss, m)? - potential_v(ss.lambda)? + f_pend(d2 * ss.big_lambda) / (d2 * d2))
}

pub fn h_pend_scaled(ss: &ScaledState) -> Result<f64> {
    hamiltonian_pend(&PendulumState {
        lambda: ss.lambda,
        big_lambda: ss.big_lambda,
    })
}

/// H_osc = xy/δ² (real on the real slice).
pub fn h_osc(ss: &ScaledState) -> f64 {
    (ss.x * ss.y).re / (ss.delta * ss.delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_values() {
        assert_eq!(potential_v(0.0).unwrap(), -0.5);
        assert!((potential_v(lambda0()).unwrap() + 0.5).abs() < 1e-14);
        assert!((potential_v(PI / 2.0).unwrap() - (1.0 - 0.5f64.sqrt())).abs() < 1e-15);
        assert!(potential_v(PI).is_err());
        for &l in &[0.3, 1.1, 2.9] {
            let direct = 1.0 - f64::cos(l) - 1.0 / (2.0 + 2.0 * f64::cos(l)).sqrt();
            assert!((potential_v(l).unwrap() - direct).abs() < 1e-14);
            assert_eq!(potential_v(-l).unwrap(), potential_v(l).unwrap());
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &l in &[0.2, 1.0, 2.0, 2.8] {
            let h = 1e-5;
            let fd = (potential_v(l + h).unwrap() - potential_v(l - h).unwrap()) / (2.0 * h);
            assert!((fd - potential_dv(l).unwrap()).abs() < 1e-8 * (1.0 + fd.abs()));
            let fd2 = (potential_dv(l + h).unwrap() - potential_dv(l - h).unwrap()) / (2.0 * h);
            assert!((fd2 - potential_d2v(l).unwrap()).abs() < 1e-8 * (1.0 + fd2.abs()));
        }
    }

    #[test]
    fn saddle_values() {
        assert!((potential_d2v(0.0).unwrap() - 0.875).abs() < 1e-15);
        let (p, m) = saddle_eigenvalues().unwrap();
        assert!((p - saddle_rate()).abs() < 1e-15 && p == -m);
        assert!((p - 1.62019).abs() < 1e-5);
        let h = hamiltonian_pend(&PendulumState { lambda: 0.0, big_lambda: 0.0 }).unwrap();
        assert_eq!(h, -0.5);
    }

    #[test]
    fn turning_point_value() {
        assert!((lambda0() - 2.7243593).abs() < 1e-7);
        let s = separatrix(0.0).unwrap();
        assert_eq!((s.lambda_h, s.big_lambda_h), (lambda0(), 0.0));
    }

    #[test]
    fn separatrix_energy_and_symmetry() {
        let hd = SeparatrixHandle::standard().unwrap();
        for i in -150..=150 {
            let t = i as f64 * 0.1;
            let s = hd.sample(t);
            let e = hamiltonian_pend(&PendulumState {
                lambda: s.lambda_h,
                big_lambda: s.big_lambda_h,
            })
            .unwrap();
            assert!((e + 0.5).abs() < 1e-10, "t = {t}: {e}");
            assert!((hd.lambda_h(-t) - s.lambda_h).abs() < 1e-10);
            assert!((hd.big_lambda_h(-t) + s.big_lambda_h).abs() < 1e-10);
        }
        assert!(hd.big_lambda_h(-3.0) < 0.0 && hd.big_lambda_h(3.0) > 0.0);
    }

    #[test]
    fn handle_matches_direct_integration() {
        let hd = SeparatrixHandle::standard().unwrap();
        for &t in &[0.3456, 0.999, 1.7, -4.25, 9.1234] {
            let s = separatrix(t).unwrap();
            assert!((s.lambda_h - hd.lambda_h(t)).abs() < 1e-11 * (1.0 + 1.0 / s.lambda_h), "t = {t}");
            assert!((s.big_lambda_h - hd.big_lambda_h(t)).abs() < 1e-11, "t = {t}");
        }
    }

    #[test]
    fn saddle_decay_rate() {
        let r = separatrix(10.0).unwrap().lambda_h / separatrix(12.0).unwrap().lambda_h;
        let expect = (2.0 * saddle_rate()).exp();
        assert!((r / expect - 1.0).abs() < 0.01, "{r} vs {expect}");
    }

    #[test]
    fn inversion_round_trip() {
        let hd = SeparatrixHandle::standard().unwrap();
        for &u in &[0.05, 0.5, 2.0, 7.5, 19.0, 25.0] {
            for (b, s) in [(Branch::Stable, 1.0), (Branch::Unstable, -1.0)] {
                let l = hd.lambda_h(s * u);
                let back = hd.invert(l, b).unwrap();
                assert!((back - s * u).abs() < 1e-9, "u = {u}: {back}");
            }
        }
        assert!(hd.invert(3.0, Branch::Stable).is_err());
        assert!(hd.invert(-0.1, Branch::Stable).is_err());
    }

    #[test]
    fn constant_a_two_routes() {
        let ax = constant_a_x_integral(1e-13).unwrap();
        let al = constant_a_lambda_integral(1e-13).unwrap();
        assert!((ax.value - 0.177744).abs() < 1e-6, "{ax:?}");
        assert!((ax.value - al.value).abs() < 1e-8, "{ax:?} {al:?}");
    }

    #[test]
    fn a_stable_across_levels() {
        let a10 = constant_a_x_integral_levels(1e-10, 10).unwrap().value;
        let a12 = constant_a_x_integral_levels(1e-10, 12).unwrap().value;
        assert!((a10 - a12).abs() < 1e-9);
    }

    #[test]
    fn a_integrands_match_direct_forms() {
        let x = 0.1f64;
        let direct = (2.0 / (1.0 - x)) * (x / (3.0 * (x + 1.0) * (1.0 - 4.0 * x - 4.0 * x * x))).sqrt();
        assert!((a_x_integrand(x, a_upper_limit() - x) - direct).abs() < 1e-14);
        let l = 2.9;
        let s = (-(2.0 / 3.0) * (potential_v(l).unwrap() + 0.5)).sqrt();
        let direct = 1.0 / (3.0 * s);
        assert!((a_lambda_integrand(l, l - lambda0(), PI - l) - direct).abs() < 1e-12);
    }

    #[test]
    fn lambda_integrand_vanishes_at_pi() {
        let f = |d: f64| a_lambda_integrand(PI - d, PI - d - lambda0(), d);
        assert!(f(1e-8) < 1e-3);
        let ratio = f(1e-8) / f(4e-8);
        assert!((ratio - 0.5).abs() < 1e-3, "{ratio}");
    }

    #[test]
    fn v_below_minus_half_past_turning_point() {
        let l0 = lambda0();
        for i in 1..=100 {
            let l = l0 + (PI - l0) * i as f64 / 101.0;
            assert!(potential_v(l).unwrap() + 0.5 < 0.0);
        }
    }

    #[test]
    fn f_pend_cubic() {
        assert_eq!(f_pend(0.0), 0.0);
        let h = 1e-4;
        assert!((f_pend(h) - f_pend(-h)).abs() / (2.0 * h) < 1e-7);
        assert!((f_pend(h) - 2.0 * f_pend(0.0) + f_pend(-h)).abs() / (h * h) < 1e-3);
        let z = 0.1f64;
        let direct = -1.0 / (2.0 * (1.0 + z).powi(2)) - (1.0 + z) + 1.5 + 1.5 * z * z;
        assert!((f_pend(z) - direct).abs() < 1e-15);
        assert!((f_pend(z) - 0.0017768595).abs() < 1e-10);
    }
}
