//! Adaptive Runge–Kutta–Fehlberg 7(8) integration with event location.
//!
//! All tableau coefficients are rational, so they are represented exactly
//! (up to the working precision) in both scalar modes. The eighth-order
//! solution is propagated by default; `method_order = 7` propagates the
//! seventh-order one instead.

use super::roots::{brent, RootTol};
use super::scalar::Real;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const STAGES: usize = 13;

const C: [(i64, i64); STAGES] = [
    (0, 1),
    (2, 27),
    (1, 9),
    (1, 6),
    (5, 12),
    (1, 2),
    (5, 6),
    (1, 6),
    (2, 3),
    (1, 3),
    (1, 1),
    (0, 1),
    (1, 1),
];

#[rustfmt::skip]
const A: [&[(i64, i64)]; STAGES] = [
    &[],
    &[(2, 27)],
    &[(1, 36), (1, 12)],
    &[(1, 24), (0, 1), (1, 8)],
    &[(5, 12), (0, 1), (-25, 16), (25, 16)],
    &[(1, 20), (0, 1), (0, 1), (1, 4), (1, 5)],
    &[(-25, 108), (0, 1), (0, 1), (125, 108), (-65, 27), (125, 54)],
    &[(31, 300), (0, 1), (0, 1), (0, 1), (61, 225), (-2, 9), (13, 900)],
    &[(2, 1), (0, 1), (0, 1), (-53, 6), (704, 45), (-107, 9), (67, 90), (3, 1)],
    &[(-91, 108), (0, 1), (0, 1), (23, 108), (-976, 135), (311, 54), (-19, 60), (17, 6), (-1, 12)],
    &[(2383, 4100), (0, 1), (0, 1), (-341, 164), (4496, 1025), (-301, 82), (2133, 4100), (45, 82), (45, 164), (18, 41)],
    &[(3, 205), (0, 1), (0, 1), (0, 1), (0, 1), (-6, 41), (-3, 205), (-3, 41), (3, 41), (6, 41), (0, 1)],
    &[(-1777, 4100), (0, 1), (0, 1), (-341, 164), (4496, 1025), (-289, 82), (2193, 4100), (51, 82), (33, 164), (12, 41), (0, 1), (1, 1)],
];

const B8: [(i64, i64); STAGES] = [
    (0, 1),
    (0, 1),
    (0, 1),
    (0, 1),
    (0, 1),
    (34, 105),
    (9, 35),
    (9, 35),
    (9, 280),
    (9, 280),
    (0, 1),
    (41, 840),
    (41, 840),
];

const B7: [(i64, i64); STAGES] = [
    (41, 840),
    (0, 1),
    (0, 1),
    (0, 1),
    (0, 1),
    (34, 105),
    (9, 35),
    (9, 35),
    (9, 280),
    (9, 280),
    (41, 840),
    (0, 1),
    (0, 1),
];

/// Butcher tableau materialized in the working precision.
#[derive(Clone, Debug)]
struct Tableau<T> {
    c: [T; STAGES],
    a: Vec<Vec<(usize, T)>>,
    b: Vec<(usize, T)>,
    err: T,
}

impl<T: Real> Tableau<T> {
    fn new(order: u32) -> Self {
        let r = |(n, d): (i64, i64)| T::ratio(n, d);
        let sparse = |row: &[(i64, i64)]| {
            row.iter()
                .enumerate()
                .filter(|(_, q)| q.0 != 0)
                .map(|(j, &q)| (j, r(q)))
                .collect::<Vec<_>>()
        };
        let b = if order == 7 { &B7 } else { &B8 };
        Self {
            c: C.map(r),
            a: A.iter().map(|row| sparse(row)).collect(),
            b: sparse(b),
            err: T::ratio(41, 840),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest admissible step magnitude.
    pub max_step: f64,
    /// 8 (default) or 7.
    pub method_order: u32,
    /// Record the accepted steps for Hermite interpolation.
    pub dense_output: bool,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-14,
            max_step: f64::INFINITY,
            method_order: 8,
            dense_output: false,
            max_steps: 5_000_000,
            initial_step: None,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tol(rel_tol: f64, abs_tol: f64) -> Self {
        Self {
            rel_tol,
            abs_tol,
            ..Self::default()
        }
    }

    pub fn max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }

    pub fn dense(mut self) -> Self {
        self.dense_output = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && !x.is_nan();
        if !pos(self.rel_tol) || !pos(self.abs_tol) {
            return Err(Error::Invalid(format!(
                "tolerances must be positive (rel_tol = {:e}, abs_tol = {:e})",
                self.rel_tol, self.abs_tol
            )));
        }
        if !pos(self.max_step) {
            return Err(Error::Invalid(format!("max_step must be positive, got {:e}", self.max_step)));
        }
        if self.method_order != 7 && self.method_order != 8 {
            return Err(Error::Invalid(format!(
                "method_order {} is not available (the RKF7(8) pair provides 7 or 8)",
                self.method_order
            )));
        }
        if let Some(h) = self.initial_step {
            if !pos(h) {
                return Err(Error::Invalid(format!("initial_step must be positive, got {h:e}")));
            }
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Accepted step record: time, state and derivative.
#[derive(Copy, Clone, Debug)]
pub struct Knot<T, const N: usize> {
    pub t: T,
    pub y: [T; N],
    pub f: [T; N],
}

/// Piecewise cubic Hermite interpolant through the accepted steps.
#[derive(Clone, Debug)]
pub struct Trajectory<T, const N: usize> {
    pub knots: Vec<Knot<T, N>>,
}

impl<T: Real, const N: usize> Trajectory<T, N> {
    pub fn t_first(&self) -> T {
        self.knots[0].t
    }

    pub fn t_last(&self) -> T {
        self.knots[self.knots.len() - 1].t
    }

    /// Evaluates the interpolant; times outside the covered span are clamped.
    pub fn eval(&self, t: T) -> [T; N] {
        let k = &self.knots;
        if k.len() == 1 {
            return k[0].y;
        }
        let forward = k[1].t > k[0].t;
        let before = |a: T, b: T| if forward { a < b } else { a > b };
        // first knot strictly past t
        let idx = k.partition_point(|kn| !before(t, kn.t)).clamp(1, k.len() - 1);
        hermite(&k[idx - 1], &k[idx], t)
    }
}

fn hermite<T: Real, const N: usize>(a: &Knot<T, N>, b: &Knot<T, N>, t: T) -> [T; N] {
    let h = b.t - a.t;
    let s = (t - a.t) / h;
    let one = T::one();
    let two = T::from_f64(2.0);
    let three = T::from_f64(3.0);
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = two * s3 - three * s2 + one;
    let h10 = s3 - two * s2 + s;
    let h01 = -two * s3 + three * s2;
    let h11 = s3 - s2;
    std::array::from_fn(|i| h00 * a.y[i] + h10 * h * a.f[i] + h01 * b.y[i] + h11 * h * b.f[i])
}

#[derive(Clone, Debug)]
pub struct Solution<T, const N: usize> {
    pub t: T,
    pub y: [T; N],
    pub stats: Stats,
    pub trajectory: Option<Trajectory<T, N>>,
}

fn all_finite<T: Real, const N: usize>(v: &[T; N]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Adaptive stepper. It owns the current state and the derivative at it.
pub struct Stepper<'f, T: Real, F, const N: usize> {
    rhs: &'f F,
    tab: Tableau<T>,
    cfg: IntegratorConfig,
    dir: f64,
    h: f64,
    t: T,
    y: [T; N],
    f: [T; N],
    stats: Stats,
    knots: Option<Vec<Knot<T, N>>>,
}

impl<'f, T, F, const N: usize> Stepper<'f, T, F, N>
where
    T: Real,
    F: Fn(T, &[T; N]) -> [T; N],
{
    /// `dir` is the sign of the integration direction.
    pub fn new(rhs: &'f F, t0: T, y0: [T; N], dir: f64, cfg: &IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        if !all_finite(&y0) || !t0.is_finite() {
            return Err(Error::Invalid("initial state is not finite".into()));
        }
        let f0 = rhs(t0, &y0);
        if !all_finite(&f0) {
            return Err(Error::NonFiniteRhs { t: t0.to_f64() });
        }
        let mut s = Self {
            rhs,
            tab: Tableau::new(cfg.method_order),
            cfg: cfg.clone(),
            dir: if dir < 0.0 { -1.0 } else { 1.0 },
            h: 0.0,
            t: t0,
            y: y0,
            f: f0,
            stats: Stats {
                evaluations: 1,
                ..Stats::default()
            },
            knots: None,
        };
        s.h = match cfg.initial_step {
            Some(h) => h.min(cfg.max_step),
            None => s.initial_step(),
        };
        if cfg.dense_output {
            s.knots = Some(vec![Knot { t: t0, y: y0, f: f0 }]);
        }
        Ok(s)
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn y(&self) -> &[T; N] {
        &self.y
    }

    pub fn f(&self) -> &[T; N] {
        &self.f
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    pub fn direction(&self) -> f64 {
        self.dir
    }

    fn scale(&self, y: f64) -> f64 {
        self.cfg.abs_tol + self.cfg.rel_tol * y.abs()
    }

    fn initial_step(&mut self) -> f64 {
        // Hairer–Nørsett–Wanner starting step heuristic
        let mut d0 = 0.0f64;
        let mut d1 = 0.0f64;
        for i in 0..N {
            let sc = self.scale(self.y[i].to_f64());
            d0 = d0.max((self.y[i].to_f64() / sc).abs());
            d1 = d1.max((self.f[i].to_f64() / sc).abs());
        }
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(self.cfg.max_step);
        let y1: [T; N] = std::array::from_fn(|i| self.y[i] + self.f[i].mul_f(self.dir * h0));
        let f1 = (self.rhs)(self.t + T::from_f64(self.dir * h0), &y1);
        self.stats.evaluations += 1;
        let mut d2 = 0.0f64;
        for i in 0..N {
            let sc = self.scale(self.y[i].to_f64());
            d2 = d2.max(((f1[i] - self.f[i]).to_f64() / sc).abs());
        }
        if !d2.is_finite() {
            return h0 * 1e-3;
        }
        d2 /= h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1).min(self.cfg.max_step)
    }

    /// One Runge–Kutta step of signed length `h` from `(t, y)` with `k1 = f(t, y)`.
    /// Returns the new state and the local error estimate, or `None` if a
    /// stage evaluation was not finite.
    fn rk_step(&mut self, t: T, y: &[T; N], k1: &[T; N], h: T) -> Option<([T; N], [T; N])> {
        let mut k = [[T::zero(); N]; STAGES];
        k[0] = *k1;
        for s in 1..STAGES {
            let mut ys = *y;
            for &(j, a) in &self.tab.a[s] {
                let ha = h * a;
                for i in 0..N {
                    ys[i] += ha * k[j][i];
                }
            }
            k[s] = (self.rhs)(t + h * self.tab.c[s], &ys);
            self.stats.evaluations += 1;
            if !all_finite(&k[s]) {
                return None;
            }
        }
        let mut ynew = *y;
        for &(j, b) in &self.tab.b {
            let hb = h * b;
            for i in 0..N {
                ynew[i] += hb * k[j][i];
            }
        }
        let he = h * self.tab.err;
        let err = std::array::from_fn(|i| he * (k[0][i] + k[10][i] - k[11][i] - k[12][i]));
        Some((ynew, err))
    }

    /// State reached by a single untested step of signed length `h` from the
    /// current point. Used for locating events inside an accepted step.
    pub fn probe(&mut self, from: &Knot<T, N>, h: T) -> Result<[T; N]> {
        if h == T::zero() {
            return Ok(from.y);
        }
        self.rk_step(from.t, &from.y, &from.f, h)
            .map(|(y, _)| y)
            .ok_or(Error::NonFiniteRhs { t: from.t.to_f64() })
    }

    pub fn knot(&self) -> Knot<T, N> {
        Knot {
            t: self.t,
            y: self.y,
            f: self.f,
        }
    }

    /// Advances by one accepted step, never passing `t_stop` when given.
    pub fn step(&mut self, t_stop: Option<T>) -> Result<()> {
        if self.stats.accepted >= self.cfg.max_steps {
            return Err(Error::MaxStepsExceeded {
                max_steps: self.cfg.max_steps,
            });
        }
        let mut saw_nonfinite = false;
        let mut rejected_here = false;
        loop {
            let t_f = self.t.to_f64();
            let floor = 8.0 * f64::EPSILON * t_f.abs().max(1e-3);
            if self.h < floor || self.h == 0.0 {
                return Err(if saw_nonfinite {
                    Error::NonFiniteRhs { t: t_f }
                } else {
                    Error::StepSizeUnderflow { t: t_f }
                });
            }
            let mut h = T::from_f64(self.dir * self.h);
            let mut lands = false;
            if let Some(ts) = t_stop {
                let rem = ts - self.t;
                if (rem.to_f64() * self.dir) <= self.h * (1.0 + 1e-12) {
                    h = rem;
                    lands = true;
                }
            }
            let (t, y, f) = (self.t, self.y, self.f);
            let Some((ynew, err)) = self.rk_step(t, &y, &f, h) else {
                saw_nonfinite = true;
                self.stats.rejected += 1;
                rejected_here = true;
                self.h *= 0.25;
                continue;
            };
            let mut en = 0.0f64;
            for i in 0..N {
                let sc = self.cfg.abs_tol + self.cfg.rel_tol * y[i].to_f64().abs().max(ynew[i].to_f64().abs());
                en = en.max(err[i].to_f64().abs() / sc);
            }
            if !en.is_finite() {
                saw_nonfinite = true;
                self.stats.rejected += 1;
                rejected_here = true;
                self.h *= 0.25;
                continue;
            }
            let hmag = h.to_f64().abs();
            if en <= 1.0 {
                let tnew = if lands { t_stop.unwrap() } else { t + h };
                let fnew = (self.rhs)(tnew, &ynew);
                self.stats.evaluations += 1;
                if !all_finite(&fnew) {
                    saw_nonfinite = true;
                    self.stats.rejected += 1;
                    rejected_here = true;
                    self.h *= 0.25;
                    continue;
                }
                self.t = tnew;
                self.y = ynew;
                self.f = fnew;
                self.stats.accepted += 1;
                let mut fac = if en == 0.0 { 5.0 } else { 0.9 * en.powf(-1.0 / 8.0) };
                fac = fac.clamp(0.2, 5.0);
                if rejected_here {
                    fac = fac.min(1.0);
                }
                // a shortened landing step does not shrink the controller's step
                let base = if lands { self.h.max(hmag) } else { hmag };
                self.h = (base * fac).min(self.cfg.max_step);
                if let Some(kn) = self.knots.as_mut() {
                    kn.push(Knot {
                        t: tnew,
                        y: ynew,
                        f: fnew,
                    });
                }
                return Ok(());
            }
            self.stats.rejected += 1;
            rejected_here = true;
            let fac = (0.9 * en.powf(-1.0 / 8.0)).clamp(0.1, 0.9);
            self.h = hmag * fac;
        }
    }

    pub fn into_trajectory(self) -> Option<Trajectory<T, N>> {
        self.knots.map(|knots| Trajectory { knots })
    }
}

/// Integrates from `t0` to `t1` (either direction).
pub fn integrate<T, F, const N: usize>(
    rhs: F,
    t0: T,
    t1: T,
    y0: [T; N],
    cfg: &IntegratorConfig,
) -> Result<Solution<T, N>>
where
    T: Real,
    F: Fn(T, &[T; N]) -> [T; N],
{
    let dir = (t1 - t0).signum_f64();
    let mut st = Stepper::new(&rhs, t0, y0, dir, cfg)?;
    while st.t() != t1 {
        st.step(Some(t1))?;
    }
    let (t, y, stats) = (st.t(), *st.y(), st.stats());
    Ok(Solution {
        t,
        y,
        stats,
        trajectory: st.into_trajectory(),
    })
}

/// Integrates through a monotone list of output times, landing on each exactly.
pub fn integrate_sampled<T, F, const N: usize>(
    rhs: F,
    t0: T,
    y0: [T; N],
    times: &[T],
    cfg: &IntegratorConfig,
) -> Result<Vec<[T; N]>>
where
    T: Real,
    F: Fn(T, &[T; N]) -> [T; N],
{
    let Some(&last) = times.last() else {
        return Ok(Vec::new());
    };
    let dir = (last - t0).signum_f64();
    let mut st = Stepper::new(&rhs, t0, y0, dir, cfg)?;
    let mut out = Vec::with_capacity(times.len());
    for &ts in times {
        if (ts - st.t()).to_f64() * dir < 0.0 {
            return Err(Error::Invalid("output times must be monotone in the integration direction".into()));
        }
        while st.t() != ts {
            st.step(Some(ts))?;
        }
        out.push(*st.y());
    }
    Ok(out)
}

/// Fixed-step integration with `n` equal steps (no error control).
pub fn integrate_fixed<T, F, const N: usize>(rhs: F, t0: T, t1: T, y0: [T; N], n: usize, order: u32) -> Result<[T; N]>
where
    T: Real,
    F: Fn(T, &[T; N]) -> [T; N],
{
    let cfg = IntegratorConfig {
        method_order: order,
        initial_step: Some(1.0),
        ..IntegratorConfig::default()
    };
    let mut st = Stepper::new(&rhs, t0, y0, 1.0, &cfg)?;
    let h = (t1 - t0) / T::from_f64(n as f64);
    let mut kn = st.knot();
    for i in 0..n {
        let y = st.probe(&kn, h)?;
        let t = t0 + h * T::from_f64((i + 1) as f64);
        kn = Knot { t, y, f: rhs(t, &y) };
    }
    Ok(kn.y)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Direction {
    /// The event function increases through zero as `t` increases.
    Increasing,
    Decreasing,
    Any,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Which {
    First,
    /// The k-th matching crossing, counted from 1.
    Nth(usize),
}

pub struct EventSpec<G> {
    pub function: G,
    pub direction: Direction,
    pub root_tol: f64,
    pub which: Which,
    /// Crossings whose refined state fails this test are skipped and not counted.
    pub accept: Option<AcceptFn>,
}

/// Predicate on the refined event state.
pub type AcceptFn = Box<dyn Fn(&[f64]) -> bool + Send + Sync>;

impl<G> EventSpec<G> {
    pub fn new(function: G, direction: Direction) -> Self {
        Self {
            function,
            direction,
            root_tol: 1e-14,
            which: Which::First,
            accept: None,
        }
    }

    pub fn accept(mut self, f: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        self.accept = Some(Box::new(f));
        self
    }

    pub fn nth(mut self, k: usize) -> Self {
        self.which = Which::Nth(k);
        self
    }

    pub fn root_tol(mut self, tol: f64) -> Self {
        self.root_tol = tol;
        self
    }

    fn target(&self) -> Result<usize> {
        if !(self.root_tol > 0.0) {
            return Err(Error::Invalid(format!("root_tol must be positive, got {:e}", self.root_tol)));
        }
        match self.which {
            Which::First => Ok(1),
            Which::Nth(0) => Err(Error::Invalid("event index k must be at least 1".into())),
            Which::Nth(k) => Ok(k),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EventHit<T, const N: usize> {
    pub t: T,
    pub y: [T; N],
    pub stats: Stats,
}

/// Integrates from `t0` toward `t_end` and stops at the requested crossing.
pub fn integrate_to_event<T, F, G, const N: usize>(
    rhs: F,
    t0: T,
    y0: [T; N],
    t_end: T,
    ev: &EventSpec<G>,
    cfg: &IntegratorConfig,
) -> Result<EventHit<T, N>>
where
    T: Real,
    F: Fn(T, &[T; N]) -> [T; N],
    G: Fn(T, &[T; N]) -> T,
{
    integrate_to_event_observed(rhs, t0, y0, t_end, ev, cfg, |_, _| Ok(()))
}

/// As [`integrate_to_event`], calling `observe` after every accepted step;
/// an error from the observer aborts the integration.
pub fn integrate_to_event_observed<T, F, G, O, const N: usize>(
    rhs: F,
    t0: T,
    y0: [T; N],
    t_end: T,
    ev: &EventSpec<G>,
    cfg: &IntegratorConfig,
    mut observe: O,
) -> Result<EventHit<T, N>>
where
    T: Real,
    F: Fn(T, &[T; N]) -> [T; N],
    G: Fn(T, &[T; N]) -> T,
    O: FnMut(T, &[T; N]) -> Result<()>,
{
    let target = ev.target()?;
    let dir = (t_end - t0).signum_f64();
    if dir == 0.0 {
        return Err(Error::Invalid("event horizon coincides with the initial time".into()));
    }
    let g = &ev.function;
    let mut st = Stepper::new(&rhs, t0, y0, dir, cfg)?;
    let mut g_prev = g(t0, &y0);
    if !g_prev.is_finite() {
        return Err(Error::NonFiniteEvent { t: t0.to_f64() });
    }
    let mut count = 0usize;
    while st.t() != t_end {
        let before = st.knot();
        st.step(Some(t_end))?;
        observe(st.t(), st.y())?;
        let g_new = g(st.t(), st.y());
        if !g_new.is_finite() {
            return Err(Error::NonFiniteEvent { t: st.t().to_f64() });
        }
        let (sp, sn) = (g_prev.signum_f64(), g_new.signum_f64());
        let crossed = sp != 0.0 && sn != sp;
        let rising = dir * (g_new - g_prev).to_f64() > 0.0;
        let matches = match ev.direction {
            Direction::Any => true,
            Direction::Increasing => rising,
            Direction::Decreasing => !rising,
        };
        if crossed && matches {
            let mut hit = None;
            {
                let after_t = st.t();
                let h = after_t - before.t;
                let mut probe_err = None;
                let s = brent(
                    |s: T| {
                        if probe_err.is_some() {
                            return T::zero();
                        }
                        match st.probe(&before, s) {
                            Ok(y) => g(before.t + s, &y),
                            Err(e) => {
                                probe_err = Some(e);
                                T::zero()
                            }
                        }
                    },
                    T::zero(),
                    h,
                    RootTol::new(ev.root_tol),
                )?;
                if let Some(e) = probe_err {
                    return Err(e);
                }
                let y = if s == h { *st.y() } else { st.probe(&before, s)? };
                let t = if s == h { after_t } else { before.t + s };
                let y64: Vec<f64> = y.iter().map(|v| v.to_f64()).collect();
                if ev.accept.as_ref().is_none_or(|a| a(&y64)) {
                    hit = Some((t, y));
                }
            }
            if let Some((t, y)) = hit {
                count += 1;
                if count == target {
                    return Ok(EventHit { t, y, stats: st.stats() });
                }
            }
        }
        g_prev = g_new;
    }
    Err(Error::NoCrossing {
        horizon: t_end.to_f64(),
    })
}
