//! The parameter-free inner equation and its Stokes constant.
//!
//! Both inner solutions share one formal expansion in powers of U^{-1/3}.
//! It is computed once to high order, summed at |Re U| = R where it is
//! exponentially accurate, and each solution is then integrated along the
//! line Im U = −ρ toward Re U = 0. The difference of the third components
//! times e^{iU} gives the Stokes constant.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ode::{integrate, integrate_sampled, IntegratorConfig};

type C = Complex64;

const I: C = C::new(0.0, 1.0);

/// Where the cut of U^{1/3} lies.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cut {
    /// arg U ∈ (−3π/2, π/2], the sector of the singularity at u = iA.
    PositiveImaginary,
    /// The principal branch, used for the conjugate pipeline on Im U > 0.
    NegativeReal,
}

pub fn cube_root(u: C, cut: Cut) -> Result<C> {
    if u == C::new(0.0, 0.0) || !u.re.is_finite() || !u.im.is_finite() {
        return Err(Error::Domain("U^{1/3} needs a finite nonzero U".into()));
    }
    let mut arg = u.arg();
    if cut == Cut::PositiveImaginary && arg > PI / 2.0 {
        arg -= 2.0 * PI;
    }
    Ok(C::from_polar(u.norm().cbrt(), arg / 3.0))
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerState {
    #[serde(rename = "U")]
    pub u: C,
    #[serde(rename = "W")]
    pub w: C,
    #[serde(rename = "X")]
    pub x: C,
    #[serde(rename = "Y")]
    pub y: C,
}

impl InnerState {
    pub fn new(u: C, w: C, x: C, y: C) -> Self {
        Self { u, w, x, y }
    }

    pub fn z(&self) -> [C; 3] {
        [self.w, self.x, self.y]
    }
}

struct Powers {
    u: C,
    c: C,   // U^{1/3}
    u23: C, // U^{2/3}
    u43: C, // U^{4/3}
}

impl Powers {
    fn new(u: C, cut: Cut) -> Result<Self> {
        let c = cube_root(u, cut)?;
        let u23 = c * c;
        Ok(Self { u, c, u23, u43: u23 * u23 })
    }
}

fn j_value(p: &Powers, w: C, x: C, y: C) -> C {
    let u = p.u;
    4.0 * w * w / (9.0 * p.u23) - 16.0 * w / (27.0 * p.u43) + 16.0 / (81.0 * u * u)
        + 4.0 * (x + y) / (9.0 * u) * (w - 2.0 / (3.0 * p.u23))
        - 4.0 * I * (x - y) / (3.0 * p.u23)
        - (x * x + y * y) / (3.0 * p.u43)
        + 10.0 * x * y / (9.0 * p.u43)
}

pub fn calj_cut(s: &InnerState, cut: Cut) -> Result<C> {
    Ok(j_value(&Powers::new(s.u, cut)?, s.w, s.x, s.y))
}

pub fn calj(s: &InnerState) -> Result<C> {
    calj_cut(s, Cut::PositiveImaginary)
}

fn k_value(p: &Powers, w: C, x: C, y: C) -> Result<C> {
    let q = 1.0 + j_value(p, w, x, y);
    check_sqrt(q)?;
    Ok(-0.75 * p.u23 * w * w - (1.0 / q.sqrt() - 1.0) / (3.0 * p.u23))
}

fn check_sqrt(q: C) -> Result<()> {
    if q.im == 0.0 && q.re <= 0.0 {
        return Err(Error::Domain(format!("1 + J = {q} lies on the cut of the square root")));
    }
    Ok(())
}

pub fn calk_cut(s: &InnerState, cut: Cut) -> Result<C> {
    k_value(&Powers::new(s.u, cut)?, s.w, s.x, s.y)
}

/// K = −(3/4)U^{2/3}W² − (1/(3U^{2/3}))(1/√(1+J) − 1).
pub fn calk(s: &InnerState) -> Result<C> {
    calk_cut(s, Cut::PositiveImaginary)
}

/// Hand-differentiated partials (K_U, K_W, K_X, K_Y).
pub fn calk_partials_cut(s: &InnerState, cut: Cut) -> Result<[C; 4]> {
    let p = Powers::new(s.u, cut)?;
    let (u, w, x, y) = (s.u, s.w, s.x, s.y);
    let u53 = u * p.u23;
    let u73 = u * p.u43;
    let q = 1.0 + j_value(&p, w, x, y);
    check_sqrt(q)?;
    let inv_sqrt = 1.0 / q.sqrt();
    let q32 = inv_sqrt / q;
    let ju = -(8.0 / 27.0) * w * w / u53 + (64.0 / 81.0) * w / u73 - (32.0 / 81.0) / (u * u * u)
        - (4.0 / 9.0) * (x + y) / (u * u) * (w - 2.0 / (3.0 * p.u23))
        + (16.0 / 81.0) * (x + y) / (u * u53)
        + (8.0 / 9.0) * I * (x - y) / u53
        + (4.0 / 9.0) * (x * x + y * y) / u73
        - (40.0 / 27.0) * x * y / u73;
    let jw = (8.0 / 9.0) * w / p.u23 - (16.0 / 27.0) / p.u43 + (4.0 / 9.0) * (x + y) / u;
    let common = (4.0 / 9.0) / u * (w - 2.0 / (3.0 * p.u23));
    let jx = common - (4.0 / 3.0) * I / p.u23 - (2.0 / 3.0) * x / p.u43 + (10.0 / 9.0) * y / p.u43;
    let jy = common + (4.0 / 3.0) * I / p.u23 - (2.0 / 3.0) * y / p.u43 + (10.0 / 9.0) * x / p.u43;
    let k = q32 / (6.0 * p.u23);
    Ok([
        -0.5 * w * w / p.c + (2.0 / 9.0) * (inv_sqrt - 1.0) / u53 + k * ju,
        -1.5 * p.u23 * w + k * jw,
        k * jx,
        k * jy,
    ])
}

pub fn calk_partials(s: &InnerState) -> Result<[C; 4]> {
    calk_partials_cut(s, Cut::PositiveImaginary)
}

/// Smallest admissible |1 + ∂_W K|.
pub const DENOMINATOR_FLOOR: f64 = 1e-6;

/// dZ/dU = A Z + (f − g A Z)/(1 + g) with A = diag(0, i, −i).
pub fn inner_rhs_cut(u: C, z: &[C; 3], cut: Cut) -> Result<[C; 3]> {
    let s = InnerState::new(u, z[0], z[1], z[2]);
    let [ku, kw, kx, ky] = calk_partials_cut(&s, cut)?;
    let f = [-ku, I * ky, -I * kx];
    let g = kw;
    let den = 1.0 + g;
    if den.norm() < DENOMINATOR_FLOOR {
        return Err(Error::Domain(format!("1 + g = {den} is below the denominator floor at U = {u}")));
    }
    let az = [C::new(0.0, 0.0), I * z[1], -I * z[2]];
    Ok(std::array::from_fn(|k| az[k] + (f[k] - g * az[k]) / den))
}

pub fn inner_rhs(s: &InnerState) -> Result<[C; 3]> {
    inner_rhs_cut(s.u, &s.z(), Cut::PositiveImaginary)
}

/// Truncated power series in s = U^{-1/3}; `c[k]` multiplies s^k.
#[derive(Clone, Debug, PartialEq)]
struct Series {
    c: Vec<C>,
}

impl Series {
    fn zero(n: usize) -> Self {
        Self { c: vec![C::new(0.0, 0.0); n] }
    }

    fn monomial(n: usize, k: usize, v: C) -> Self {
        let mut s = Self::zero(n);
        if k < n {
            s.c[k] = v;
        }
        s
    }

    fn len(&self) -> usize {
        self.c.len()
    }

    fn add(&self, o: &Self) -> Self {
        Self {
            c: self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect(),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        Self {
            c: self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect(),
        }
    }

    fn scale(&self, v: C) -> Self {
        Self {
            c: self.c.iter().map(|a| a * v).collect(),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let n = self.len();
        let mut r = Self::zero(n);
        for (i, a) in self.c.iter().enumerate() {
            if *a == C::new(0.0, 0.0) {
                continue;
            }
            for (j, b) in o.c[..n - i].iter().enumerate() {
                r.c[i + j] += a * b;
            }
        }
        r
    }

    /// Multiplies by s^k; for k < 0 the dropped low coefficients must vanish.
    fn shift(&self, k: i64) -> Self {
        let n = self.len() as i64;
        let mut r = Self::zero(self.len());
        for i in 0..n {
            let j = i + k;
            if (0..n).contains(&j) {
                r.c[j as usize] = self.c[i as usize];
            }
        }
        r
    }

    /// (1 + self)^p for a series without constant term.
    fn one_plus_pow(&self, p: f64) -> Self {
        let n = self.len();
        let mut a = self.clone();
        a.c[0] += 1.0;
        let mut y = Self::zero(n);
        y.c[0] = C::new(1.0, 0.0);
        // (1 + j) y' = p j' y, coefficientwise
        for k in 1..n {
            let mut acc = C::new(0.0, 0.0);
            for m in 1..=k {
                acc += (p * m as f64 - (k - m) as f64) * a.c[m] * y.c[k - m];
            }
            y.c[k] = acc / k as f64;
        }
        y
    }

    /// d/dU, using d(s^k)/dU = −(k/3) s^{k+3}.
    fn d_du(&self) -> Self {
        let scaled = Self {
            c: self.c.iter().enumerate().map(|(k, a)| a * (-(k as f64) / 3.0)).collect(),
        };
        scaled.shift(3)
    }

    /// Antiderivative vanishing at infinity; needs no terms below s^4.
    fn integrate_u(&self) -> Result<Self> {
        let mut r = Self::zero(self.len());
        for (k, a) in self.c.iter().enumerate() {
            if *a == C::new(0.0, 0.0) {
                continue;
            }
            if k <= 3 {
                return Err(Error::Domain("inner series term without a decaying antiderivative".into()));
            }
            r.c[k - 3] = a * (-3.0 / (k as f64 - 3.0));
        }
        Ok(r)
    }

    fn max_diff(&self, o: &Self) -> f64 {
        self.c.iter().zip(&o.c).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    fn eval(&self, s: C) -> C {
        self.c.iter().rev().fold(C::new(0.0, 0.0), |acc, a| acc * s + a)
    }

    fn eval_du(&self, s: C) -> C {
        self.d_du().eval(s)
    }
}

/// Formal solution of the inner equation in powers of U^{-1/3}.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerSeries {
    w: Series,
    x: Series,
    y: Series,
    pub order: usize,
    pub iterations: usize,
}

impl InnerSeries {
    /// Computes all coefficients up to s^{order−1} by fixed-point iteration
    /// W = ∫R₁, X = −i(X′ − R₂), Y = i(Y′ − R₃).
    pub fn compute(order: usize) -> Result<Self> {
        if !(16..=400).contains(&order) {
            return Err(Error::Invalid(format!("series order {order} must lie in [16, 400]")));
        }
        let n = order;
        let mut w = Series::zero(n);
        let mut x = Series::zero(n);
        let mut y = Series::zero(n);
        for it in 0..(n + 8) {
            let [r1, r2, r3] = series_r(&w, &x, &y);
            let wn = r1.integrate_u()?;
            let xn = x.d_du().sub(&r2).scale(-I);
            let yn = y.d_du().sub(&r3).scale(I);
            let diff = wn.max_diff(&w).max(xn.max_diff(&x)).max(yn.max_diff(&y));
            w = wn;
            x = xn;
            y = yn;
            if diff == 0.0 {
                return Ok(Self {
                    w,
                    x,
                    y,
                    order,
                    iterations: it + 1,
                });
            }
        }
        Err(Error::RootNotConverged { iterations: n + 8 })
    }

    /// Leading coefficients (W: s^8, X: s^4, Y: s^4).
    pub fn leading(&self) -> [C; 3] {
        [self.w.c[8], self.x.c[4], self.y.c[4]]
    }

    pub fn eval(&self, u: C, cut: Cut) -> Result<[C; 3]> {
        let s = 1.0 / cube_root(u, cut)?;
        Ok([self.w.eval(s), self.x.eval(s), self.y.eval(s)])
    }

    pub fn eval_derivative(&self, u: C, cut: Cut) -> Result<[C; 3]> {
        let s = 1.0 / cube_root(u, cut)?;
        Ok([self.w.eval_du(s), self.x.eval_du(s), self.y.eval_du(s)])
    }

    /// Relative residual of the inner equation for the truncated sum at U.
    pub fn residual(&self, u: C, cut: Cut) -> Result<f64> {
        let z = self.eval(u, cut)?;
        let dz = self.eval_derivative(u, cut)?;
        let f = inner_rhs_cut(u, &z, cut)?;
        let num = (0..3).map(|k| (dz[k] - f[k]).norm_sqr()).sum::<f64>().sqrt();
        let den = (0..3).map(|k| z[k].norm_sqr()).sum::<f64>().sqrt();
        Ok(num / den)
    }
}

fn series_r(w: &Series, x: &Series, y: &Series) -> [Series; 3] {
    let n = w.len();
    let one = Series::monomial(n, 0, C::new(1.0, 0.0));
    let m = |k: usize, v: f64| Series::monomial(n, k, C::new(v, 0.0));
    let xy_sum = x.add(y);
    let xy_diff = x.sub(y);
    let sq = x.mul(x).add(&y.mul(y));
    let prod = x.mul(y);
    let ww = w.mul(w);
    let w_shift = w.sub(&m(2, 2.0 / 3.0));
    let j = ww
        .shift(2)
        .scale((4.0 / 9.0).into())
        .sub(&w.shift(4).scale((16.0 / 27.0).into()))
        .add(&m(6, 16.0 / 81.0))
        .add(&xy_sum.mul(&w_shift).shift(3).scale((4.0 / 9.0).into()))
        .sub(&xy_diff.shift(2).scale(I * (4.0 / 3.0)))
        .sub(&sq.shift(4).scale((1.0 / 3.0).into()))
        .add(&prod.shift(4).scale((10.0 / 9.0).into()));
    let ju = ww
        .shift(5)
        .scale((-8.0 / 27.0).into())
        .add(&w.shift(7).scale((64.0 / 81.0).into()))
        .sub(&m(9, 32.0 / 81.0))
        .sub(&xy_sum.mul(&w_shift).shift(6).scale((4.0 / 9.0).into()))
        .add(&xy_sum.shift(8).scale((16.0 / 81.0).into()))
        .add(&xy_diff.shift(5).scale(I * (8.0 / 9.0)))
        .add(&sq.shift(7).scale((4.0 / 9.0).into()))
        .sub(&prod.shift(7).scale((40.0 / 27.0).into()));
    let jw = w
        .shift(2)
        .scale((8.0 / 9.0).into())
        .sub(&m(4, 16.0 / 27.0))
        .add(&xy_sum.shift(3).scale((4.0 / 9.0).into()));
    let common = w_shift.shift(3).scale((4.0 / 9.0).into());
    let jx = common
        .sub(&Series::monomial(n, 2, I * (4.0 / 3.0)))
        .sub(&x.shift(4).scale((2.0 / 3.0).into()))
        .add(&y.shift(4).scale((10.0 / 9.0).into()));
    let jy = common
        .add(&Series::monomial(n, 2, I * (4.0 / 3.0)))
        .sub(&y.shift(4).scale((2.0 / 3.0).into()))
        .add(&x.shift(4).scale((10.0 / 9.0).into()));
    let p = j.one_plus_pow(-0.5);
    let q = j.one_plus_pow(-1.5);
    let sixth = C::new(1.0 / 6.0, 0.0);
    let kw = w.shift(-2).scale((-1.5).into()).add(&q.mul(&jw).shift(2).scale(sixth));
    let kx = q.mul(&jx).shift(2).scale(sixth);
    let ky = q.mul(&jy).shift(2).scale(sixth);
    let ku = ww
        .shift(1)
        .scale((-0.5).into())
        .add(&p.sub(&one).shift(5).scale((2.0 / 9.0).into()))
        .add(&q.mul(&ju).shift(2).scale(sixth));
    let f1 = ku.scale((-1.0).into());
    let f2 = ky.scale(I);
    let f3 = kx.scale(-I);
    let inv = kw.one_plus_pow(-1.0);
    [
        f1.mul(&inv),
        f2.sub(&kw.mul(x).scale(I)).mul(&inv),
        f3.add(&kw.mul(y).scale(I)).mul(&inv),
    ]
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerKind {
    Unstable,
    Stable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerPath {
    /// The path is Im U = −ρ (or +ρ for the conjugate pipeline).
    pub im_level: f64,
    /// |Re U| at which the series seeds the solution.
    pub re_start: f64,
    pub re_end: f64,
    pub integrator: IntegratorConfig,
    pub upper: bool,
}

impl InnerPath {
    pub fn new(rho: f64, re_start: f64) -> Self {
        Self {
            im_level: rho,
            re_start,
            re_end: 0.0,
            integrator: IntegratorConfig::with_tol(1e-13, 1e-17),
            upper: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.im_level >= 5.0) {
            return Err(Error::Invalid(format!("path level ρ = {} must be at least 5", self.im_level)));
        }
        if !(self.re_start >= 30.0) {
            return Err(Error::Invalid(format!("seed abscissa R = {} must be at least 30", self.re_start)));
        }
        if !(self.re_end.abs() < self.re_start) {
            return Err(Error::Invalid("re_end must lie strictly inside (−R, R)".into()));
        }
        self.integrator.validate()
    }

    fn cut(&self) -> Cut {
        if self.upper {
            Cut::NegativeReal
        } else {
            Cut::PositiveImaginary
        }
    }

    fn point(&self, re: f64) -> C {
        C::new(re, if self.upper { self.im_level } else { -self.im_level })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerBranchSolution {
    pub kind: InnerKind,
    pub samples: Vec<InnerState>,
    pub seed_residual: f64,
    /// max over samples of max(|U^{8/3}W|, |U^{4/3}X|, |U^{4/3}Y|).
    pub weighted_bound: f64,
}

/// Largest admissible relative residual of the seed.
pub const SEED_RESIDUAL_MAX: f64 = 1e-10;

/// Weighted decay bound above which a branch is rejected.
pub const DECAY_BOUND_MAX: f64 = 10.0;

fn to_real(z: &[C; 3]) -> [f64; 6] {
    [z[0].re, z[0].im, z[1].re, z[1].im, z[2].re, z[2].im]
}

fn to_complex(y: &[f64; 6]) -> [C; 3] {
    [C::new(y[0], y[1]), C::new(y[2], y[3]), C::new(y[4], y[5])]
}

fn weighted(u: C, z: &[C; 3], cut: Cut) -> Result<f64> {
    let u43 = cube_root(u, cut)?.norm().powi(4);
    Ok((z[0].norm() * u43 * u43).max(z[1].norm() * u43).max(z[2].norm() * u43))
}

/// Integrates one inner solution from its series seed to the requested abscissas.
pub fn solve_branch(kind: InnerKind, path: &InnerPath, series: &InnerSeries, sample_re: &[f64]) -> Result<InnerBranchSolution> {
    path.validate()?;
    let cut = path.cut();
    let start = match kind {
        InnerKind::Unstable => -path.re_start,
        InnerKind::Stable => path.re_start,
    };
    let u0 = path.point(start);
    let seed = series.eval(u0, cut)?;
    let seed_residual = series.residual(u0, cut)?;
    if !(seed_residual <= SEED_RESIDUAL_MAX) {
        return Err(Error::Check(format!(
            "series seed residual {seed_residual:e} at R = {} is too large; increase R",
            path.re_start
        )));
    }
    let im = path.point(0.0).im;
    let err = std::cell::Cell::new(None);
    let rhs = |a: f64, y: &[f64; 6]| -> [f64; 6] {
        match inner_rhs_cut(C::new(a, im), &to_complex(y), cut) {
            Ok(d) => to_real(&d),
            Err(e) => {
                err.set(Some(e));
                [f64::NAN; 6]
            }
        }
    };
    let mut order: Vec<usize> = (0..sample_re.len()).collect();
    match kind {
        InnerKind::Unstable => order.sort_by(|&a, &b| sample_re[a].total_cmp(&sample_re[b])),
        InnerKind::Stable => order.sort_by(|&a, &b| sample_re[b].total_cmp(&sample_re[a])),
    }
    let times: Vec<f64> = order.iter().map(|&k| sample_re[k]).collect();
    if times.iter().any(|t| t.abs() >= path.re_start) {
        return Err(Error::Invalid("sample abscissas must lie inside (−R, R)".into()));
    }
    let ys = integrate_sampled(rhs, start, to_real(&seed), &times, &path.integrator);
    if let Some(e) = err.take() {
        return Err(e);
    }
    let ys = ys?;
    let mut samples = vec![InnerState::new(C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)); sample_re.len()];
    let mut bound = 0.0f64;
    for (slot, y) in order.iter().zip(&ys) {
        let z = to_complex(y);
        let u = path.point(sample_re[*slot]);
        bound = bound.max(weighted(u, &z, cut)?);
        samples[*slot] = InnerState::new(u, z[0], z[1], z[2]);
    }
    if bound > DECAY_BOUND_MAX {
        return Err(Error::Check(format!("weighted decay bound {bound:.3e} exceeds {DECAY_BOUND_MAX}")));
    }
    Ok(InnerBranchSolution {
        kind,
        samples,
        seed_residual,
        weighted_bound: bound,
    })
}

/// Largest relative defect between consecutive samples when each is
/// re-integrated to the next with a tolerance 100× tighter.
pub fn plug_back_residual(sol: &InnerBranchSolution, path: &InnerPath) -> Result<f64> {
    let cut = path.cut();
    let fine = IntegratorConfig::with_tol(path.integrator.rel_tol * 1e-2, path.integrator.abs_tol * 1e-2);
    let im = path.point(0.0).im;
    let mut idx: Vec<usize> = (0..sol.samples.len()).collect();
    idx.sort_by(|&a, &b| sol.samples[a].u.re.total_cmp(&sol.samples[b].u.re));
    if sol.kind == InnerKind::Stable {
        idx.reverse();
    }
    let rhs = |a: f64, y: &[f64; 6]| to_real(&inner_rhs_cut(C::new(a, im), &to_complex(y), cut).unwrap_or([C::new(f64::NAN, 0.0); 3]));
    let mut worst = 0.0f64;
    for pair in idx.windows(2) {
        let (a, b) = (&sol.samples[pair[0]], &sol.samples[pair[1]]);
        let r = integrate(rhs, a.u.re, b.u.re, to_real(&a.z()), &fine)?;
        let z = to_complex(&r.y);
        let num = (0..3).map(|k| (z[k] - b.z()[k]).norm_sqr()).sum::<f64>().sqrt();
        let den = (0..3).map(|k| b.z()[k].norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    Ok(worst)
}

/// Largest defect of Z^s(U) = (ω² conj W^u(−Ū), ω conj X^u(−Ū), ω conj Y^u(−Ū)),
/// ω = e^{iπ/3}, relative to ‖Z^s‖, at the given abscissas.
pub fn symmetry_defect(path: &InnerPath, series: &InnerSeries, points: &[f64]) -> Result<f64> {
    let mirrored: Vec<f64> = points.iter().map(|a| -a).collect();
    let zs = solve_branch(InnerKind::Stable, path, series, points)?;
    let zu = solve_branch(InnerKind::Unstable, path, series, &mirrored)?;
    let w = C::from_polar(1.0, PI / 3.0);
    let mut worst = 0.0f64;
    for (s, u) in zs.samples.iter().zip(&zu.samples) {
        let img = [w * w * u.w.conj(), w * u.x.conj(), w * u.y.conj()];
        let num = (0..3).map(|k| (img[k] - s.z()[k]).norm_sqr()).sum::<f64>().sqrt();
        let den = (0..3).map(|k| s.z()[k].norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub rho: f64,
    pub theta: C,
    /// Coefficient a of the correction Θ(1 + a/U).
    pub correction: C,
    /// (Re U, θ(U)) at the evaluation points.
    pub samples: Vec<(f64, C)>,
    /// Z^u − Z^s at the evaluation points.
    pub delta: Vec<[C; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesEstimate {
    pub theta: C,
    pub abs_theta: f64,
    pub per_rho: Vec<RhoEstimate>,
    pub spread: f64,
    pub re_start: f64,
    pub series_order: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesConfig {
    pub rhos: Vec<f64>,
    pub re_start: f64,
    pub eval_points: Vec<f64>,
    pub series_order: usize,
    pub rel_tol: f64,
    pub spread_max: f64,
}

impl Default for StokesConfig {
    fn default() -> Self {
        Self {
            rhos: vec![8.0, 12.0, 16.0],
            re_start: 40.0,
            eval_points: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            series_order: 130,
            rel_tol: 1e-13,
            spread_max: 0.01,
        }
    }
}

/// Least squares of θ_k ≈ c0 + c1/U_k.
fn fit_theta(us: &[C], th: &[C]) -> Result<(C, C)> {
    let n = us.len();
    if n < 2 {
        return Err(Error::Invalid("Stokes fit needs at least two evaluation points".into()));
    }
    // normal equations for the complex 2×2 system
    let (mut a11, mut a12, mut a22) = (0.0, C::new(0.0, 0.0), 0.0);
    let (mut b1, mut b2) = (C::new(0.0, 0.0), C::new(0.0, 0.0));
    for (u, t) in us.iter().zip(th) {
        let v = 1.0 / u;
        a11 += 1.0;
        a12 += v;
        a22 += v.norm_sqr();
        b1 += t;
        b2 += v.conj() * t;
    }
    let det = a11 * a22 - a12.norm_sqr();
    if det.abs() < 1e-14 * a11 * a22 {
        return Err(Error::Invalid("Stokes fit is ill-conditioned; spread the evaluation points".into()));
    }
    let c0 = (a22 * b1 - a12 * b2) / det;
    let c1 = (a11 * b2 - a12.conj() * b1) / det;
    Ok((c0, c1))
}

/// θ(U) samples on one path level; `conjugate` runs the mirrored pipeline on Im U = +ρ.
pub fn stokes_at_rho(rho: f64, cfg: &StokesConfig, series: &InnerSeries, conjugate: bool) -> Result<RhoEstimate> {
    let mut path = InnerPath::new(rho, cfg.re_start);
    path.integrator = IntegratorConfig::with_tol(cfg.rel_tol, cfg.rel_tol * 1e-4);
    path.upper = conjugate;
    let zu = solve_branch(InnerKind::Unstable, &path, series, &cfg.eval_points)?;
    let zs = solve_branch(InnerKind::Stable, &path, series, &cfg.eval_points)?;
    let mut us = Vec::new();
    let mut th = Vec::new();
    let mut delta = Vec::new();
    for (a, b) in zu.samples.iter().zip(&zs.samples) {
        delta.push([a.w - b.w, a.x - b.x, a.y - b.y]);
        let t = if conjugate {
            (a.x - b.x) * (-I * a.u).exp()
        } else {
            (a.y - b.y) * (I * a.u).exp()
        };
        us.push(a.u);
        th.push(t);
    }
    let floor = f64::EPSILON * 1e3;
    let weak = th.iter().any(|t| t.norm() * (-rho).exp() < floor);
    if weak {
        return Err(Error::NumericalFloor(format!(
            "difference e^{{-ρ}} at ρ = {rho} is below the working precision"
        )));
    }
    let (c0, c1) = fit_theta(&us, &th)?;
    Ok(RhoEstimate {
        rho,
        theta: c0,
        correction: c1 / c0,
        samples: cfg.eval_points.iter().copied().zip(th).collect(),
        delta,
    })
}

/// Stokes constant Θ from several path levels.
pub fn stokes_extract(cfg: &StokesConfig) -> Result<StokesEstimate> {
    stokes_extract_with(cfg, false)
}

pub fn stokes_extract_with(cfg: &StokesConfig, conjugate: bool) -> Result<StokesEstimate> {
    if cfg.rhos.is_empty() {
        return Err(Error::Invalid("at least one path level ρ is required".into()));
    }
    if cfg.eval_points.len() < 2 {
        return Err(Error::Invalid("at least two evaluation points are required".into()));
    }
    let series = InnerSeries::compute(cfg.series_order)?;
    let per_rho: Vec<RhoEstimate> = cfg
        .rhos
        .iter()
        .map(|&r| stokes_at_rho(r, cfg, &series, conjugate))
        .collect::<Result<_>>()?;
    let n = per_rho.len() as f64;
    let theta = per_rho.iter().map(|e| e.theta).sum::<C>() / n;
    let mut spread = 0.0f64;
    for a in &per_rho {
        for b in &per_rho {
            spread = spread.max((a.theta - b.theta).norm() / a.theta.norm().min(b.theta.norm()));
        }
    }
    let est = StokesEstimate {
        theta,
        abs_theta: theta.norm(),
        per_rho,
        spread,
        re_start: cfg.re_start,
        series_order: cfg.series_order,
    };
    if spread > cfg.spread_max {
        return Err(Error::Check(format!(
            "Stokes estimates disagree across ρ: spread {spread:.3e} > {}",
            cfg.spread_max
        )));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn st(u: C, w: C, x: C, y: C) -> InnerState {
        InnerState::new(u, w, x, y)
    }

    #[test]
    fn cube_root_branch() {
        let r = cube_root(c(0.0, 8.0), Cut::PositiveImaginary).unwrap();
        assert!((r - C::from_polar(2.0, PI / 6.0)).norm() < 1e-14);
        let r = cube_root(c(-8.0, 1e-12), Cut::PositiveImaginary).unwrap();
        assert!((r - C::from_polar(2.0, -PI / 3.0)).norm() < 1e-10);
        let r = cube_root(c(-8.0, 1e-12), Cut::NegativeReal).unwrap();
        assert!((r - C::from_polar(2.0, PI / 3.0)).norm() < 1e-10);
        let r = cube_root(c(3.0, -4.0), Cut::PositiveImaginary).unwrap();
        assert!((r * r * r - c(3.0, -4.0)).norm() < 1e-13);
        assert!(cube_root(c(0.0, 0.0), Cut::PositiveImaginary).is_err());
    }

    #[test]
    fn j_and_k_at_zero() {
        let z = c(0.0, 0.0);
        for u in [c(-10.0, -5.0), c(3.0, -7.0), c(40.0, -2.0)] {
            let j = calj(&st(u, z, z, z)).unwrap();
            assert!((j - 16.0 / (81.0 * u * u)).norm() < 1e-15 * j.norm().max(1.0));
            let k = calk(&st(u, z, z, z)).unwrap();
            let u23 = cube_root(u, Cut::PositiveImaginary).unwrap().powu(2);
            let expect = -(1.0 / (1.0 + 16.0 / (81.0 * u * u)).sqrt() - 1.0) / (3.0 * u23);
            assert!((k - expect).norm() < 1e-15);
        }
        // K(U,0) = O(U^{-8/3})
        let ratio = |r: f64| {
            let u = c(-r, -r);
            calk(&st(u, z, z, z)).unwrap().norm() * u.norm().powf(8.0 / 3.0)
        };
        assert!((ratio(100.0) / ratio(1000.0) - 1.0).abs() < 0.01);
    }

    fn fd_partials(s: &InnerState) -> [C; 4] {
        // complex-step style central differences in each holomorphic variable
        let h = 1e-5;
        let k = |t: &InnerState| calk(t).unwrap();
        let d = |f: &dyn Fn(C) -> InnerState| (k(&f(c(h, 0.0))) - k(&f(c(-h, 0.0)))) / (2.0 * h);
        [
            d(&|e| st(s.u + e, s.w, s.x, s.y)),
            d(&|e| st(s.u, s.w + e, s.x, s.y)),
            d(&|e| st(s.u, s.w, s.x + e, s.y)),
            d(&|e| st(s.u, s.w, s.x, s.y + e)),
        ]
    }

    #[test]
    fn partials_match_differences() {
        let s = st(c(-10.0, -5.0), c(0.01, 0.0), c(0.0, 0.02), c(-0.01, 0.0));
        let exact = calk_partials(&s).unwrap();
        let fd = fd_partials(&s);
        for k in 0..4 {
            assert!((exact[k] - fd[k]).norm() < 1e-8, "{k}: {} vs {}", exact[k], fd[k]);
        }
    }

    #[test]
    fn partials_are_holomorphic() {
        // Cauchy–Riemann: derivative along i·h equals i times derivative along h
        let s = st(c(-6.0, -9.0), c(0.003, 0.001), c(0.01, -0.02), c(0.02, 0.01));
        let h = 1e-5;
        for k in 0..4 {
            let bump = |e: C| {
                let mut t = s;
                match k {
                    0 => t.u += e,
                    1 => t.w += e,
                    2 => t.x += e,
                    _ => t.y += e,
                }
                inner_rhs(&t).unwrap()
            };
            let dr: Vec<C> = (0..3).map(|j| (bump(c(h, 0.0))[j] - bump(c(-h, 0.0))[j]) / (2.0 * h)).collect();
            let di: Vec<C> = (0..3).map(|j| (bump(c(0.0, h))[j] - bump(c(0.0, -h))[j]) / (2.0 * h)).collect();
            for j in 0..3 {
                assert!((di[j] - I * dr[j]).norm() < 1e-7 * (1.0 + dr[j].norm()), "{k} {j}");
            }
        }
    }

    #[test]
    fn rhs_at_zero_decays() {
        let z = [c(0.0, 0.0); 3];
        let r = |m: f64| {
            let u = c(-m, -m);
            let d = inner_rhs_cut(u, &z, Cut::PositiveImaginary).unwrap();
            d[1].norm() * u.norm().powf(4.0 / 3.0)
        };
        assert!((r(200.0) / r(2000.0) - 1.0).abs() < 0.01);
    }

    #[test]
    fn conjugation_symmetry_of_rhs() {
        let (u, w, x, y) = (c(-7.0, -6.0), c(0.002, 0.003), c(0.01, 0.02), c(-0.03, 0.005));
        let a = inner_rhs_cut(u, &[w, x, y], Cut::NegativeReal).unwrap();
        let b = inner_rhs_cut(u.conj(), &[w.conj(), y.conj(), x.conj()], Cut::NegativeReal).unwrap();
        assert!((b[0] - a[0].conj()).norm() < 1e-12);
        assert!((b[1] - a[2].conj()).norm() < 1e-12);
        assert!((b[2] - a[1].conj()).norm() < 1e-12);
    }

    #[test]
    fn series_leading_terms() {
        let s = InnerSeries::compute(40).unwrap();
        let [w, x, y] = s.leading();
        assert!((w - c(4.0 / 243.0, 0.0)).norm() < 1e-15);
        assert!((x - c(0.0, -2.0 / 9.0)).norm() < 1e-15);
        assert!((y - c(0.0, 2.0 / 9.0)).norm() < 1e-15);
        assert!(s.w.c[..8].iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn series_solves_equation_far_out() {
        let s = InnerSeries::compute(130).unwrap();
        let r = s.residual(c(-40.0, -10.0), Cut::PositiveImaginary).unwrap();
        assert!(r < 1e-12, "{r:e}");
        let coarse = InnerSeries::compute(20).unwrap();
        let rc = coarse.residual(c(-40.0, -10.0), Cut::PositiveImaginary).unwrap();
        assert!(rc > r);
    }

    #[test]
    fn path_validation() {
        assert!(InnerPath::new(4.0, 40.0).validate().is_err());
        assert!(InnerPath::new(8.0, 20.0).validate().is_err());
        assert!(InnerPath::new(8.0, 30.0).validate().is_ok());
    }

    #[test]
    fn fit_recovers_exact_model() {
        let theta = c(0.81, -1.403);
        let a = c(-0.2, -0.1);
        let us: Vec<C> = (-2..=2).map(|k| c(k as f64, -8.0)).collect();
        let th: Vec<C> = us.iter().map(|u| theta * (1.0 + a / u)).collect();
        let (c0, c1) = fit_theta(&us, &th).unwrap();
        assert!((c0 - theta).norm() < 1e-12 && (c1 / c0 - a).norm() < 1e-12);
    }
}
