//! Planar circular restricted three-body problem in the rotating frame.
//!
//! Units: primaries' separation 1, angular velocity 1. The larger primary S
//! (mass 1-μ) sits at (μ, 0) and the smaller one P (mass μ) at (μ-1, 0).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ode::{integrate, IntegratorConfig};
use crate::numerics::roots::{brent, RootTol};
use crate::numerics::Real;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuParam {
    pub mu: f64,
    pub delta: f64,
}

impl MuParam {
    pub fn new(mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= 0.5) {
            return Err(Error::Invalid(format!("mass ratio must lie in (0, 1/2], got {mu}")));
        }
        Ok(Self {
            mu,
            delta: mu.sqrt().sqrt(),
        })
    }

    /// The μ = 0 Kepler limit, allowed only where a formula is evaluated directly.
    pub fn kepler() -> Self {
        Self { mu: 0.0, delta: 0.0 }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartesianState {
    pub q1: f64,
    pub q2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl CartesianState {
    pub const fn new(q1: f64, q2: f64, p1: f64, p2: f64) -> Self {
        Self { q1, q2, p1, p2 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.q1, self.q2, self.p1, self.p2]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn dist(&self, other: &Self) -> f64 {
        let a = self.to_array();
        let b = other.to_array();
        (0..4).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
    }
}

fn primary_distances(s: &CartesianState, mu: f64) -> Result<(f64, f64)> {
    let r1 = (s.q1 - mu).hypot(s.q2);
    let r2 = (s.q1 - mu + 1.0).hypot(s.q2);
    if !(r1 > 0.0) || (mu > 0.0 && !(r2 > 0.0)) {
        return Err(Error::Domain(format!("state ({}, {}) coincides with a primary", s.q1, s.q2)));
    }
    Ok((r1, r2))
}

/// The rotating-frame Hamiltonian h (minus the Jacobi constant over two).
pub fn hamiltonian_h(s: &CartesianState, m: &MuParam) -> Result<f64> {
    let mu = m.mu;
    let (r1, r2) = primary_distances(s, mu)?;
    let kin = 0.5 * (s.p1 * s.p1 + s.p2 * s.p2);
    let rot = s.q1 * s.p2 - s.q2 * s.p1;
    let pot = (1.0 - mu) / r1 + if mu > 0.0 { mu / r2 } else { 0.0 };
    Ok(kin - rot - pot)
}

/// h in the working precision, for conservation checks.
pub fn hamiltonian_t<T: Real>(y: &[T; 4], mu: T) -> T {
    let one = T::one();
    let d1 = y[0] - mu;
    let d2 = y[0] - mu + one;
    let r1 = (d1 * d1 + y[1] * y[1]).sqrt();
    let r2 = (d2 * d2 + y[1] * y[1]).sqrt();
    let half = T::from_f64(0.5);
    half * (y[2] * y[2] + y[3] * y[3]) - (y[0] * y[3] - y[1] * y[2]) - (one - mu) / r1 - mu / r2
}

/// Symplectic gradient (∂h/∂p, -∂h/∂q) in the working precision.
#[inline]
pub fn field<T: Real>(y: &[T; 4], mu: T) -> [T; 4] {
    let one = T::one();
    let d1 = y[0] - mu;
    let d2 = y[0] - mu + one;
    let yy = y[1] * y[1];
    let s1 = d1 * d1 + yy;
    let s2 = d2 * d2 + yy;
    let k1 = (one - mu) / (s1 * s1.sqrt());
    let k2 = mu / (s2 * s2.sqrt());
    [
        y[2] + y[1],
        y[3] - y[0],
        y[3] - k1 * d1 - k2 * d2,
        -y[2] - (k1 + k2) * y[1],
    ]
}

pub fn vector_field(s: &CartesianState, m: &MuParam) -> Result<CartesianState> {
    primary_distances(s, m.mu)?;
    Ok(CartesianState::from_array(field(&s.to_array(), m.mu)))
}

/// Gradient of h with respect to (q1, q2, p1, p2).
pub fn gradient_h(s: &CartesianState, m: &MuParam) -> Result<[f64; 4]> {
    let f = vector_field(s, m)?;
    Ok([-f.p1, -f.p2, f.q1, f.q2])
}

/// Reversing involution (q1, q2, p1, p2) -> (q1, -q2, -p1, p2).
pub fn involution_phi(s: &CartesianState) -> CartesianState {
    CartesianState::new(s.q1, -s.q2, -s.p1, s.p2)
}

/// Time-t flow map (t of either sign).
pub fn flow(s: &CartesianState, t: f64, m: &MuParam, cfg: &IntegratorConfig) -> Result<CartesianState> {
    let mu = m.mu;
    let sol = integrate(|_, y: &[f64; 4]| field(y, mu), 0.0, t, s.to_array(), cfg)?;
    Ok(CartesianState::from_array(sol.y))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LagrangeLabel {
    L1,
    L2,
    L3,
    L4,
    L5,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangePoint {
    pub label: LagrangeLabel,
    pub state: CartesianState,
    pub eigenvalues: [Complex64; 4],
    pub eigenvectors: [[Complex64; 4]; 4],
    pub gradient_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangeSet {
    pub mu: f64,
    pub points: Vec<LagrangePoint>,
}

impl LagrangeSet {
    pub fn get(&self, label: LagrangeLabel) -> &LagrangePoint {
        self.points.iter().find(|p| p.label == label).expect("all five points are present")
    }
}

/// ∂h/∂q1 on the corotation slice q2 = p1 = 0, p2 = q1.
fn collinear_residual(x: f64, mu: f64) -> f64 {
    let d1 = x - mu;
    let d2 = x - mu + 1.0;
    -x + (1.0 - mu) * d1 / d1.abs().powi(3) + mu * d2 / d2.abs().powi(3)
}

fn collinear(a: f64, b: f64, mu: f64) -> Result<CartesianState> {
    let tol = RootTol::new(0.0).with_x_tol(0.0);
    let x = brent(|x: f64| collinear_residual(x, mu), a, b, tol)?;
    Ok(CartesianState::new(x, 0.0, 0.0, x))
}

/// Collinear point beyond the larger primary.
pub fn l3_state(m: &MuParam) -> Result<CartesianState> {
    collinear(m.mu + 1e-9, 3.0, m.mu)
}

pub fn lagrange_points(m: &MuParam) -> Result<LagrangeSet> {
    let mu = m.mu;
    let gap = 1e-12;
    let states = [
        (LagrangeLabel::L1, collinear(mu - 1.0 + gap, mu - gap, mu)?),
        (LagrangeLabel::L2, collinear(-3.0, mu - 1.0 - gap, mu)?),
        (LagrangeLabel::L3, l3_state(m)?),
        (
            LagrangeLabel::L4,
            CartesianState::new(mu - 0.5, -0.75f64.sqrt(), 0.75f64.sqrt(), mu - 0.5),
        ),
        (
            LagrangeLabel::L5,
            CartesianState::new(mu - 0.5, 0.75f64.sqrt(), -0.75f64.sqrt(), mu - 0.5),
        ),
    ];
    let mut points = Vec::with_capacity(5);
    for (label, state) in states {
        let g = gradient_h(&state, m)?;
        let gradient_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let jac = jacobian(&state, m)?;
        let eigenvalues = spectrum(&jac);
        let eigenvectors = eigenvalues.map(|l| eigenvector(&jac, l));
        points.push(LagrangePoint {
            label,
            state,
            eigenvalues,
            eigenvectors,
            gradient_norm,
        });
    }
    Ok(LagrangeSet { mu, points })
}

pub type Mat4 = [[f64; 4]; 4];

/// Jacobian of the vector field from closed-form second derivatives.
pub fn jacobian(s: &CartesianState, m: &MuParam) -> Result<Mat4> {
    let mu = m.mu;
    primary_distances(s, mu)?;
    let (mut uxx, mut uxy, mut uyy) = (0.0, 0.0, 0.0);
    for (mass, x0) in [(1.0 - mu, mu), (mu, mu - 1.0)] {
        if mass == 0.0 {
            continue;
        }
        let dx = s.q1 - x0;
        let dy = s.q2;
        let r2 = dx * dx + dy * dy;
        let r = r2.sqrt();
        let r3 = r2 * r;
        let r5 = r3 * r2;
        uxx += mass * (3.0 * dx * dx / r5 - 1.0 / r3);
        uxy += mass * 3.0 * dx * dy / r5;
        uyy += mass * (3.0 * dy * dy / r5 - 1.0 / r3);
    }
    Ok([
        [0.0, 1.0, 1.0, 0.0],
        [-1.0, 0.0, 0.0, 1.0],
        [uxx, uxy, 0.0, 1.0],
        [uxy, uyy, -1.0, 0.0],
    ])
}

fn det3(m: [[Complex64; 3]; 3]) -> Complex64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn minor(a: &[[Complex64; 4]; 4], r: usize, c: usize) -> Complex64 {
    let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
    let mut ii = 0;
    for i in 0..4 {
        if i == r {
            continue;
        }
        let mut jj = 0;
        for j in 0..4 {
            if j == c {
                continue;
            }
            m[ii][jj] = a[i][j];
            jj += 1;
        }
        ii += 1;
    }
    det3(m)
}

fn det4(a: &Mat4) -> f64 {
    let c = a.map(|row| row.map(|x| Complex64::new(x, 0.0)));
    (0..4)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            s * a[0][j] * minor(&c, 0, j).re
        })
        .sum()
}

/// Eigenvalues of a Hamiltonian 4×4 matrix from the even quartic
/// λ⁴ - (tr M²/2) λ² + det M. Real pairs come first (positive member
/// first), then the remaining pair with non-negative imaginary part first.
pub fn spectrum(m: &Mat4) -> [Complex64; 4] {
    let mut tr2 = 0.0;
    for i in 0..4 {
        for k in 0..4 {
            tr2 += m[i][k] * m[k][i];
        }
    }
    let b = -0.5 * tr2;
    let c = det4(m);
    // roots of z² + b z + c, computed without cancellation
    let disc = Complex64::new(b * b - 4.0 * c, 0.0).sqrt();
    let sgn = if b >= 0.0 { 1.0 } else { -1.0 };
    let q = -0.5 * (Complex64::new(b, 0.0) + sgn * disc);
    let (z1, z2) = if q.norm() == 0.0 {
        (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
    } else {
        (q, Complex64::new(c, 0.0) / q)
    };
    let root = |z: Complex64| {
        let s = z.sqrt();
        // ordering convention: positive real part, or positive imaginary part
        if s.re < 0.0 || (s.re == 0.0 && s.im < 0.0) {
            -s
        } else {
            s
        }
    };
    let is_real_pair = |z: Complex64| z.im.abs() <= 1e-14 * z.norm().max(1e-300) && z.re > 0.0;
    let (first, second) = if is_real_pair(z2) && !is_real_pair(z1) { (z2, z1) } else { (z1, z2) };
    let (a, b) = (root(first), root(second));
    [a, -a, b, -b]
}

/// Unit eigenvector from the adjugate of M - λI.
pub fn eigenvector(m: &Mat4, lambda: Complex64) -> [Complex64; 4] {
    let mut a = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            a[i][j] = Complex64::new(m[i][j], 0.0) - if i == j { lambda } else { Complex64::new(0.0, 0.0) };
        }
    }
    // column j of adj(A) is the cofactor vector of row j
    let mut best = [Complex64::new(0.0, 0.0); 4];
    let mut best_norm = -1.0;
    for r in 0..4 {
        let v: [Complex64; 4] = std::array::from_fn(|i| {
            let s = if (r + i) % 2 == 0 { 1.0 } else { -1.0 };
            s * minor(&a, r, i)
        });
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if n > best_norm {
            best_norm = n;
            best = v;
        }
    }
    let n = best_norm.sqrt();
    // fix the phase so that the largest component is real and positive
    let big = best
        .iter()
        .copied()
        .max_by(|x, y| x.norm().partial_cmp(&y.norm()).unwrap())
        .unwrap();
    let phase = big.conj() / big.norm();
    best.map(|z| z * phase / n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    pub jacobian: Mat4,
    /// `[ρ, -ρ, iω, -iω]` for a saddle-centre.
    pub eigenvalues: [Complex64; 4],
    pub eigenvectors: [[Complex64; 4]; 4],
}

impl Linearization {
    pub fn hyperbolic_rate(&self) -> f64 {
        self.eigenvalues[0].re
    }

    pub fn elliptic_frequency(&self) -> f64 {
        self.eigenvalues[2].im
    }

    /// Real unit eigenvectors of the positive and negative real eigenvalues.
    pub fn hyperbolic_vectors(&self) -> ([f64; 4], [f64; 4]) {
        (self.eigenvectors[0].map(|z| z.re), self.eigenvectors[1].map(|z| z.re))
    }
}

/// Jacobian and saddle-centre spectrum at an equilibrium.
pub fn linearize(point: &CartesianState, m: &MuParam) -> Result<Linearization> {
    let jacobian = jacobian(point, m)?;
    let ev = spectrum(&jacobian);
    let scale = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tiny = 1e-12 * scale.max(1e-300);
    let real_pair = ev[0].im.abs() <= tiny && ev[0].re > 0.0;
    let imag_pair = ev[2].re.abs() <= tiny && ev[2].im > 0.0;
    if !(real_pair && imag_pair) {
        return Err(Error::Spectrum(format!("eigenvalues {ev:?}")));
    }
    let eigenvalues = [
        Complex64::new(ev[0].re, 0.0),
        Complex64::new(-ev[0].re, 0.0),
        Complex64::new(0.0, ev[2].im),
        Complex64::new(0.0, -ev[2].im),
    ];
    let eigenvectors = eigenvalues.map(|l| eigenvector(&jacobian, l));
    Ok(Linearization {
        jacobian,
        eigenvalues,
        eigenvectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mu(m: f64) -> MuParam {
        MuParam::new(m).unwrap()
    }

    #[test]
    fn kepler_limit_energies() {
        let k = MuParam::kepler();
        assert_eq!(hamiltonian_h(&CartesianState::new(2.0, 0.0, 0.0, 2.0), &k).unwrap(), -2.5);
        assert_eq!(hamiltonian_h(&CartesianState::new(1.0, 0.0, 0.0, 1.0), &k).unwrap(), -1.5);
        let f = vector_field(&CartesianState::new(1.0, 0.0, 0.0, 1.0), &k).unwrap();
        assert_eq!(f.to_array(), [0.0; 4]);
    }

    #[test]
    fn primary_is_rejected() {
        let m = mu(1e-3);
        assert!(hamiltonian_h(&CartesianState::new(1e-3, 0.0, 0.0, 0.0), &m).is_err());
        assert!(vector_field(&CartesianState::new(1e-3 - 1.0, 0.0, 1.0, 0.0), &m).is_err());
        assert!(MuParam::new(0.6).is_err());
        assert!(MuParam::new(0.0).is_err());
    }

    #[test]
    fn delta_is_quarter_root() {
        let m = mu(1e-3);
        assert!((m.delta.powi(4) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn involution_on_example() {
        let s = CartesianState::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(involution_phi(&s), CartesianState::new(1.0, -2.0, -3.0, 4.0));
        assert_eq!(involution_phi(&involution_phi(&s)), s);
    }

    #[test]
    fn vector_field_matches_finite_differences() {
        let m = mu(1e-3);
        let s = CartesianState::new(0.3, 0.8, -0.4, 0.7);
        let f = vector_field(&s, &m).unwrap().to_array();
        let h = 1e-6;
        let base = s.to_array();
        let dh = |i: usize| {
            let mut a = base;
            let mut b = base;
            a[i] += h;
            b[i] -= h;
            (hamiltonian_h(&CartesianState::from_array(a), &m).unwrap()
                - hamiltonian_h(&CartesianState::from_array(b), &m).unwrap())
                / (2.0 * h)
        };
        let expect = [dh(2), dh(3), -dh(0), -dh(1)];
        for i in 0..4 {
            assert!((f[i] - expect[i]).abs() < 1e-7, "{i}: {} vs {}", f[i], expect[i]);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = mu(1e-2);
        let s = CartesianState::new(-0.6, 0.5, 0.2, -0.3);
        let j = jacobian(&s, &m).unwrap();
        let h = 1e-6;
        for c in 0..4 {
            let mut a = s.to_array();
            let mut b = s.to_array();
            a[c] += h;
            b[c] -= h;
            let fa = field(&a, m.mu);
            let fb = field(&b, m.mu);
            for r in 0..4 {
                let fd = (fa[r] - fb[r]) / (2.0 * h);
                assert!((fd - j[r][c]).abs() < 1e-7, "({r},{c})");
            }
        }
        let tr: f64 = (0..4).map(|i| j[i][i]).sum();
        assert!(tr.abs() < 1e-12);
    }

    #[test]
    fn lagrange_points_are_critical() {
        for &mv in &[1e-2, 2.8e-3, 1e-3, 1e-4] {
            let set = lagrange_points(&mu(mv)).unwrap();
            for p in &set.points {
                assert!(p.gradient_norm <= 1e-11, "{:?} at mu={mv}: {}", p.label, p.gradient_norm);
            }
            let l3 = set.get(LagrangeLabel::L3).state;
            assert!(l3.q1 > mv && l3.q2 == 0.0 && l3.p2 == l3.q1);
        }
    }

    #[test]
    fn l3_tends_to_unit_circle() {
        let l3 = l3_state(&mu(1e-8)).unwrap();
        assert!((l3.q1 - 1.0).abs() < 1e-7);
    }

    #[test]
    fn eigenpairs_satisfy_definition() {
        let m = mu(1e-3);
        let set = lagrange_points(&m).unwrap();
        for p in &set.points {
            let jac = jacobian(&p.state, &m).unwrap();
            for (l, v) in p.eigenvalues.iter().zip(&p.eigenvectors) {
                for r in 0..4 {
                    let mv: Complex64 = (0..4).map(|c| jac[r][c] * v[c]).sum();
                    assert!((mv - l * v[r]).norm() < 1e-9, "{:?}", p.label);
                }
            }
            let ev = p.eigenvalues;
            assert!((ev[0] + ev[1]).norm() < 1e-10 && (ev[2] + ev[3]).norm() < 1e-10);
        }
    }

    #[test]
    fn l3_spectrum_expansions() {
        let m = mu(1e-3);
        let lin = linearize(&l3_state(&m).unwrap(), &m).unwrap();
        let ratio = lin.hyperbolic_rate() / (m.mu.sqrt() * (21.0f64 / 8.0).sqrt());
        assert!((0.9..=1.1).contains(&ratio), "{ratio}");
        let w = (lin.elliptic_frequency() - 1.0) / m.mu;
        assert!((0.855..=0.895).contains(&w), "{w}");
        let (vu, _) = lin.hyperbolic_vectors();
        assert!(vu[0].abs() + vu[1].abs() > 1e-3);
    }

    #[test]
    fn equilateral_points_are_not_saddle_centres() {
        let m = mu(1e-3);
        let set = lagrange_points(&m).unwrap();
        let e = linearize(&set.get(LagrangeLabel::L4).state, &m).unwrap_err();
        assert!(matches!(e, Error::Spectrum(_)));
    }
}
