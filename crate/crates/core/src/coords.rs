//! The coordinate tower: Cartesian, symplectic polar, rotating Poincaré
//! elements, scaled variables, equilibrium-shifted and separatrix coordinates.
//!
//! Poincaré convention: with `g` the (rotating) argument of pericentre,
//! `η = √(L−G)·e^{ig}` and `ξ = √(L−G)·e^{−ig}`; `λ = ℓ + g` is the mean
//! longitude in the rotating frame and `L = √a`. Internally the elements are
//! computed from the eccentricity vector `(k, h) = e·(cos g, sin g)` so that
//! nothing is singular at zero eccentricity.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::roots::{newton, RootTol};
use crate::pendulum::{Branch, SeparatrixHandle};
use crate::rpc3bp::{l3_state, CartesianState, MuParam};

/// Maps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarState {
    pub r: f64,
    pub theta: f64,
    #[serde(rename = "R")]
    pub big_r: f64,
    #[serde(rename = "G")]
    pub g: f64,
}

impl PolarState {
    pub fn new(r: f64, theta: f64, big_r: f64, g: f64) -> Self {
        Self { r, theta, big_r, g }
    }
}

pub fn cart_to_polar(s: &CartesianState) -> Result<PolarState> {
    let r = s.q1.hypot(s.q2);
    if !(r > 0.0) {
        return Err(Error::Domain("polar coordinates need r > 0".into()));
    }
    Ok(PolarState {
        r,
        theta: s.q2.atan2(s.q1),
        big_r: (s.q1 * s.p1 + s.q2 * s.p2) / r,
        g: s.q1 * s.p2 - s.q2 * s.p1,
    })
}

pub fn polar_to_cart(p: &PolarState) -> Result<CartesianState> {
    if !(p.r > 0.0) {
        return Err(Error::Domain("polar coordinates need r > 0".into()));
    }
    let (s, c) = p.theta.sin_cos();
    let gt = p.g / p.r;
    Ok(CartesianState::new(p.r * c, p.r * s, p.big_r * c - gt * s, p.big_r * s + gt * c))
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareState {
    pub lambda: f64,
    #[serde(rename = "L")]
    pub big_l: f64,
    pub eta: Complex64,
    pub xi: Complex64,
}

/// Solves Kepler's equation `E − e·sin E = M`.
pub fn kepler_solve(m: f64, e: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&e) {
        return Err(Error::Domain(format!("Kepler's equation needs 0 <= e < 1, got e = {e}")));
    }
    if e == 0.0 || m == 0.0 {
        return Ok(m);
    }
    let e0 = m + e * m.sin();
    let tol = RootTol {
        f_tol: 1e-15 * m.abs().max(1.0),
        x_tol: 0.0,
        max_iter: 100,
    };
    newton(
        |x: f64| (x - e * x.sin() - m, 1.0 - e * x.cos()),
        e0,
        Some((m - e - 1e-15, m + e + 1e-15)),
        tol,
    )
}

/// Two-body elements in equinoctial form.
struct Equinoctial {
    k: f64,
    h: f64,
}

impl Equinoctial {
    fn e2(&self) -> f64 {
        self.k * self.k + self.h * self.h
    }

    /// Position/velocity matrix factor 1/(1+√(1−e²)).
    fn beta(&self) -> f64 {
        1.0 / (1.0 + (1.0 - self.e2()).sqrt())
    }
}

pub fn polar_to_poincare(p: &PolarState) -> Result<PoincareState> {
    let e_kep = 0.5 * p.big_r * p.big_r + 0.5 * p.g * p.g / (p.r * p.r) - 1.0 / p.r;
    if !(e_kep < 0.0) {
        return Err(Error::Domain(format!("osculating orbit is not elliptic (energy {e_kep:e})")));
    }
    let big_l = 1.0 / (-2.0 * e_kep).sqrt();
    let a = big_l * big_l;
    let (st, ct) = p.theta.sin_cos();
    let (x, y) = (p.r * ct, p.r * st);
    let gr = p.g / p.r;
    let (p1, p2) = (p.big_r * ct - gr * st, p.big_r * st + gr * ct);
    let k = p.g * p2 - ct;
    let h = -p.g * p1 - st;
    let el = Equinoctial { k, h };
    if !(el.e2() < 1.0) || !(big_l + p.g > 0.0) {
        return Err(Error::Domain("osculating eccentricity is not below one".into()));
    }
    let b = el.beta();
    let bb = (1.0 - el.e2()).sqrt();
    let (u, v) = (x / a + k, y / a + h);
    let cf = ((1.0 - k * k * b) * u - h * k * b * v) / bb;
    let sf = (-h * k * b * u + (1.0 - h * h * b) * v) / bb;
    let f = sf.atan2(cf);
    let lambda = wrap_angle(f - k * f.sin() + h * f.cos());
    let eta = Complex64::new(k, h) * (big_l / (big_l + p.g).sqrt());
    Ok(PoincareState {
        lambda,
        big_l,
        eta,
        xi: eta.conj(),
    })
}

/// Inverse of [`polar_to_poincare`] on the real slice `ξ = conj(η)`.
pub fn poincare_to_polar(ps: &PoincareState) -> Result<PolarState> {
    if !(ps.big_l > 0.0) {
        return Err(Error::Domain("Delaunay action L must be positive".into()));
    }
    if (ps.xi - ps.eta.conj()).norm() > 1e-12 * (1.0 + ps.eta.norm()) {
        return Err(Error::Domain("real state requires xi = conj(eta)".into()));
    }
    let big_l = ps.big_l;
    let g = big_l - ps.eta.norm_sqr();
    if !(big_l + g > 0.0) {
        return Err(Error::Domain("osculating eccentricity is not below one".into()));
    }
    let kh = ps.eta * ((big_l + g).sqrt() / big_l);
    let el = Equinoctial { k: kh.re, h: kh.im };
    let e = el.e2().sqrt();
    if !(e < 1.0) {
        return Err(Error::Domain("osculating eccentricity is not below one".into()));
    }
    let peri = if e > 0.0 { kh.im.atan2(kh.re) } else { 0.0 };
    let ecc_anom = kepler_solve(wrap_angle(ps.lambda - peri), e)?;
    let f = ecc_anom + peri;
    let (sf, cf) = f.sin_cos();
    let (k, h) = (el.k, el.h);
    let b = el.beta();
    let a = big_l * big_l;
    let x = a * ((1.0 - h * h * b) * cf + h * k * b * sf - k);
    let y = a * (h * k * b * cf + (1.0 - k * k * b) * sf - h);
    let fdot = big_l.powi(-3) / (1.0 - k * cf - h * sf);
    let vx = a * fdot * (-(1.0 - h * h * b) * sf + h * k * b * cf);
    let vy = a * fdot * (-h * k * b * sf + (1.0 - k * k * b) * cf);
    let r = x.hypot(y);
    Ok(PolarState {
        r,
        theta: y.atan2(x),
        big_r: (x * vx + y * vy) / r,
        g,
    })
}

/// First-order expansion of the polar variables about the circular orbit.
pub fn poincare_series_first_order(ps: &PoincareState) -> (f64, f64, f64, f64) {
    let e_m = Complex64::from_polar(1.0, -ps.lambda);
    let e_p = Complex64::from_polar(1.0, ps.lambda);
    let s2 = std::f64::consts::SQRT_2;
    let i = Complex64::i();
    let r = 1.0 + 2.0 * (ps.big_l - 1.0) - (e_m * ps.eta + e_p * ps.xi).re / s2;
    let theta = ps.lambda + (i * s2 * e_m * ps.eta - i * s2 * e_p * ps.xi).re;
    let big_r = ((i * e_m * ps.eta - i * e_p * ps.xi) / s2).re;
    let g = ps.big_l - (ps.eta * ps.xi).re;
    (r, theta, big_r, g)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledState {
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub x: Complex64,
    pub y: Complex64,
    pub delta: f64,
}

pub fn scale(ps: &PoincareState, delta: f64) -> Result<ScaledState> {
    if !(delta > 0.0) {
        return Err(Error::Invalid(format!("scale delta must be positive, got {delta}")));
    }
    Ok(ScaledState {
        lambda: ps.lambda,
        big_lambda: (ps.big_l - 1.0) / (delta * delta),
        x: ps.eta / delta,
        y: ps.xi / delta,
        delta,
    })
}

pub fn unscale(ss: &ScaledState) -> PoincareState {
    let d = ss.delta;
    PoincareState {
        lambda: ss.lambda,
        big_l: 1.0 + d * d * ss.big_lambda,
        eta: ss.x * d,
        xi: ss.y * d,
    }
}

/// Ratio between physical time t and scaled time τ = δ² t.
pub fn time_scale(delta: f64) -> f64 {
    delta * delta
}

pub fn cart_to_scaled(s: &CartesianState, m: &MuParam) -> Result<ScaledState> {
    scale(&polar_to_poincare(&cart_to_polar(s)?)?, m.delta)
}

pub fn scaled_to_cart(ss: &ScaledState) -> Result<CartesianState> {
    polar_to_cart(&poincare_to_polar(&unscale(ss))?)
}

/// L3 expressed in scaled coordinates, `(0, δ²Λ̂, δ³x̂, δ³ŷ)`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumShift {
    pub l3: ScaledState,
}

impl EquilibriumShift {
    pub fn new(m: &MuParam) -> Result<Self> {
        let l3 = cart_to_scaled(&l3_state(m)?, m)?;
        Ok(Self { l3 })
    }

    /// Rescaled components (Λ̂, x̂, ŷ).
    pub fn hat(&self) -> (f64, Complex64, Complex64) {
        let d = self.l3.delta;
        (self.l3.big_lambda / (d * d), self.l3.x / d.powi(3), self.l3.y / d.powi(3))
    }

    pub fn shift(&self, ss: &ScaledState) -> ScaledState {
        ScaledState {
            lambda: ss.lambda - self.l3.lambda,
            big_lambda: ss.big_lambda - self.l3.big_lambda,
            x: ss.x - self.l3.x,
            y: ss.y - self.l3.y,
            delta: ss.delta,
        }
    }

    pub fn unshift(&self, ss: &ScaledState) -> ScaledState {
        ScaledState {
            lambda: ss.lambda + self.l3.lambda,
            big_lambda: ss.big_lambda + self.l3.big_lambda,
            x: ss.x + self.l3.x,
            y: ss.y + self.l3.y,
            delta: ss.delta,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparatrixCoordState {
    pub u: f64,
    pub w: f64,
    pub x: Complex64,
    pub y: Complex64,
}

/// Smallest admissible |u|.
pub const DEFAULT_U_FLOOR: f64 = 1e-3;

/// Separatrix coordinates of an equilibrium-shifted scaled state.
pub fn to_separatrix_coords(
    ss: &ScaledState,
    handle: &SeparatrixHandle,
    branch: Branch,
    u_floor: f64,
) -> Result<SeparatrixCoordState> {
    let u = handle.invert(ss.lambda, branch)?;
    if u.abs() < u_floor {
        return Err(Error::Domain(format!("separatrix time |u| = {:e} is below the floor {u_floor:e}", u.abs())));
    }
    let lh = handle.big_lambda_h(u);
    Ok(SeparatrixCoordState {
        u,
        w: 3.0 * lh * (lh - ss.big_lambda),
        x: ss.x,
        y: ss.y,
    })
}

pub fn from_separatrix_coords(sc: &SeparatrixCoordState, handle: &SeparatrixHandle, delta: f64) -> Result<ScaledState> {
    let lh = handle.big_lambda_h(sc.u);
    if lh == 0.0 {
        return Err(Error::Domain("separatrix coordinates are undefined at u = 0".into()));
    }
    Ok(ScaledState {
        lambda: handle.lambda_h(sc.u),
        big_lambda: lh - sc.w / (3.0 * lh),
        x: sc.x,
        y: sc.y,
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn near(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn polar_examples() {
        let c = polar_to_cart(&PolarState::new(1.0, PI / 2.0, 0.0, 1.0)).unwrap();
        assert!(near(c.q1, 0.0, 1e-15) && near(c.q2, 1.0, 1e-15));
        assert!(near(c.p1, -1.0, 1e-15) && near(c.p2, 0.0, 1e-15));
        let c = polar_to_cart(&PolarState::new(2.0, 0.0, 1.0, 3.0)).unwrap();
        assert_eq!(c.to_array(), [2.0, 0.0, 1.0, 1.5]);
        assert!(cart_to_polar(&CartesianState::new(0.0, 0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn polar_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let s = CartesianState::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let back = polar_to_cart(&cart_to_polar(&s).unwrap()).unwrap();
            assert!(back.dist(&s) < 1e-13, "{s:?}");
        }
    }

    #[test]
    fn kepler_examples() {
        assert_eq!(kepler_solve(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(kepler_solve(1.3, 0.0).unwrap(), 1.3);
        let e = kepler_solve(1.0, 0.1).unwrap();
        assert!((e - 0.1 * e.sin() - 1.0).abs() < 1e-13);
        // bisection oracle
        let (mut a, mut b) = (0.0f64, 2.0f64);
        while b - a > 1e-15 {
            let m = 0.5 * (a + b);
            if m - 0.1 * m.sin() - 1.0 < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        assert!((e - 0.5 * (a + b)).abs() < 1e-12);
        assert!(kepler_solve(1.0, 1.0).is_err());
    }

    #[test]
    fn circular_orbit_elements() {
        for &th in &[0.0, 0.7, -2.0, 3.0] {
            let ps = polar_to_poincare(&PolarState::new(1.0, th, 0.0, 1.0)).unwrap();
            assert!(near(ps.big_l, 1.0, 1e-15));
            assert!(ps.eta.norm() < 1e-15);
            assert!(near(ps.lambda, th, 1e-14));
        }
    }

    #[test]
    fn g_from_l_minus_eta_xi() {
        let ps = PoincareState {
            lambda: 0.3,
            big_l: 1.1,
            eta: Complex64::new(0.0, 0.0),
            xi: Complex64::new(0.0, 0.0),
        };
        assert_eq!(poincare_to_polar(&ps).unwrap().g, 1.1);
    }

    #[test]
    fn series_residual_is_quadratic() {
        let resid = |a: f64| {
            let ps = PoincareState {
                lambda: 0.8,
                big_l: 1.0 + a,
                eta: Complex64::new(0.6 * a, -0.9 * a),
                xi: Complex64::new(0.6 * a, 0.9 * a),
            };
            let p = poincare_to_polar(&ps).unwrap();
            let (r, th, rr, _) = poincare_series_first_order(&ps);
            (p.r - r).abs().max((p.theta - th).abs()).max((p.big_r - rr).abs())
        };
        let a = 1e-4;
        assert!(resid(a) <= 10.0 * a * a, "{}", resid(a));
        let ratio = resid(2e-3) / resid(1e-3);
        assert!((3.0..=5.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn g_identity_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let p = PolarState::new(
                rng.random_range(0.8..1.3),
                rng.random_range(-3.0..3.0),
                rng.random_range(-0.1..0.1),
                rng.random_range(0.9..1.1),
            );
            let ps = polar_to_poincare(&p).unwrap();
            assert!((ps.big_l - (ps.eta * ps.xi).re - p.g).abs() < 1e-13);
            let back = poincare_to_polar(&ps).unwrap();
            assert!((back.r - p.r).abs() < 1e-12 && (back.big_r - p.big_r).abs() < 1e-12);
            assert!(wrap_angle(back.theta - p.theta).abs() < 1e-12);
            assert!((back.g - p.g).abs() < 1e-13);
        }
    }

    #[test]
    fn hyperbolic_orbit_is_rejected() {
        assert!(polar_to_poincare(&PolarState::new(1.0, 0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn scaling_examples() {
        let zero = PoincareState {
            lambda: 0.2,
            big_l: 1.0,
            eta: Complex64::new(0.0, 0.0),
            xi: Complex64::new(0.0, 0.0),
        };
        let ss = scale(&zero, 0.3).unwrap();
        assert_eq!((ss.big_lambda, ss.x.norm(), ss.y.norm()), (0.0, 0.0, 0.0));
        let ss = ScaledState {
            lambda: 0.0,
            big_lambda: 2.0,
            x: Complex64::new(0.0, 0.0),
            y: Complex64::new(0.0, 0.0),
            delta: 0.1,
        };
        assert!(near(unscale(&ss).big_l, 1.02, 1e-15));
        let ps = PoincareState {
            lambda: 1.0,
            big_l: 1.003,
            eta: Complex64::new(1e-3, 2e-3),
            xi: Complex64::new(1e-3, -2e-3),
        };
        let back = unscale(&scale(&ps, 0.17).unwrap());
        assert!((back.big_l - ps.big_l).abs() < 1e-15 && (back.eta - ps.eta).norm() < 1e-15);
    }

    #[test]
    fn shift_sends_l3_to_origin() {
        let m = MuParam::new(1e-3).unwrap();
        let sh = EquilibriumShift::new(&m).unwrap();
        let o = sh.shift(&sh.l3);
        assert!(o.lambda.abs() < 1e-11 && o.big_lambda.abs() < 1e-11 && o.x.norm() < 1e-11);
        let p = ScaledState {
            lambda: 0.4,
            big_lambda: -0.2,
            x: Complex64::new(0.01, 0.02),
            y: Complex64::new(0.01, -0.02),
            delta: m.delta,
        };
        let back = sh.unshift(&sh.shift(&p));
        assert!((back.big_lambda - p.big_lambda).abs() < 1e-15 && (back.x - p.x).norm() < 1e-15);
    }
}
