//! Tanh-sinh (double-exponential) quadrature on a finite interval.
//!
//! Abscissas are generated level by level with the step halved each time;
//! every level reuses the previous sum and only evaluates the new odd nodes.
//! Integrands receive the node together with its exact distances to both
//! endpoints, so that factors like `sqrt(b - x)` can be formed without
//! cancellation near a singular endpoint.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub struct Singular {
    pub lower: bool,
    pub upper: bool,
}

impl Singular {
    pub const NONE: Self = Self {
        lower: false,
        upper: false,
    };
    pub const LOWER: Self = Self {
        lower: true,
        upper: false,
    };
    pub const UPPER: Self = Self {
        lower: false,
        upper: true,
    };
    pub const BOTH: Self = Self {
        lower: true,
        upper: true,
    };
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub lower: f64,
    pub upper: f64,
    pub singular_at: Singular,
    pub target_tol: f64,
    pub max_levels: usize,
}

impl QuadratureSpec {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            singular_at: Singular::NONE,
            target_tol: 1e-13,
            max_levels: 12,
        }
    }

    pub fn singular(mut self, s: Singular) -> Self {
        self.singular_at = s;
        self
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.target_tol = tol;
        self
    }

    pub fn levels(mut self, levels: usize) -> Self {
        self.max_levels = levels;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(Error::Invalid(format!(
                "quadrature interval must satisfy lower < upper, got [{}, {}]",
                self.lower, self.upper
            )));
        }
        if !(self.target_tol > 0.0) {
            return Err(Error::Invalid(format!("target_tol must be positive, got {:e}", self.target_tol)));
        }
        if self.max_levels == 0 {
            return Err(Error::Invalid("max_levels must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub levels: usize,
    pub evaluations: usize,
}

/// Integrates `f(x, x - lower, upper - x)` over `[lower, upper]`.
pub fn tanh_sinh<F>(f: F, spec: &QuadratureSpec) -> Result<QuadResult>
where
    F: Fn(f64, f64, f64) -> f64,
{
    spec.validate()?;
    let (a, b) = (spec.lower, spec.upper);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut evals = 0usize;

    // Contribution of the symmetric pair of nodes at +-t, scaled by the
    // Jacobian; None once both nodes have merged into the endpoints.
    let mut pair = |t: f64| -> Result<Option<(f64, f64)>> {
        let u = FRAC_PI_2 * t.sinh();
        let w = FRAC_PI_2 * t.cosh() / (u.cosh() * u.cosh());
        // distance from the nearer endpoint: half * (1 - tanh u)
        let d = 2.0 * half / (1.0 + (2.0 * u).exp());
        if t == 0.0 {
            evals += 1;
            let v = f(mid, mid - a, b - mid);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { x: mid });
            }
            return Ok(Some((w * v, (w * v).abs())));
        }
        if d <= 0.0 || w == 0.0 {
            return Ok(None);
        }
        let mut sum = 0.0;
        let mut mag = 0.0;
        // a bounded endpoint contributes nothing once the node is within rounding of it
        let negligible = |singular: bool| !singular && d < f64::EPSILON * half;
        let hi_x = b - d;
        let lo_x = a + d;
        if !negligible(spec.singular_at.upper) && hi_x > a {
            evals += 1;
            let v = f(hi_x, (b - a) - d, d);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { x: hi_x });
            }
            sum += w * v;
            mag += (w * v).abs();
        }
        if !negligible(spec.singular_at.lower) && lo_x < b {
            evals += 1;
            let v = f(lo_x, d, (b - a) - d);
            if !v.is_finite() {
                return Err(Error::NonFiniteIntegrand { x: lo_x });
            }
            sum += w * v;
            mag += (w * v).abs();
        }
        if negligible(spec.singular_at.upper) && negligible(spec.singular_at.lower) {
            return Ok(None);
        }
        Ok(Some((sum, mag)))
    };

    // level 0: step 1
    let mut sum = 0.0;
    let mut mag = 0.0;
    let mut k = 0i64;
    while let Some((s, m)) = pair(k as f64)? {
        sum += s;
        mag += m;
        k += 1;
        if k > 64 {
            break;
        }
    }
    let mut h = 1.0;
    let mut value = half * h * sum;
    let mut est = f64::INFINITY;
    for level in 1..=spec.max_levels {
        h *= 0.5;
        let mut k = 1i64;
        loop {
            let t = k as f64 * h;
            match pair(t)? {
                Some((s, m)) => {
                    sum += s;
                    mag += m;
                }
                None => break,
            }
            k += 2;
        }
        let new = half * h * sum;
        let rounding = 16.0 * f64::EPSILON * half * h * mag;
        est = (new - value).abs().max(rounding);
        value = new;
        if est <= spec.target_tol * value.abs().max(1.0) {
            return Ok(QuadResult {
                value,
                error_estimate: est,
                levels: level,
                evaluations: evals,
            });
        }
    }
    Err(Error::QuadratureNotConverged {
        levels: spec.max_levels,
        estimate: est,
    })
}

/// Convenience wrapper for integrands that only need the node.
pub fn tanh_sinh_plain<F>(f: F, spec: &QuadratureSpec) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    tanh_sinh(|x, _, _| f(x), spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn inverse_sqrt() {
        let spec = QuadratureSpec::new(0.0, 1.0).singular(Singular::LOWER).tol(1e-13);
        let r = tanh_sinh(|_, dl, _| 1.0 / dl.sqrt(), &spec).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12, "{r:?}");
        assert!((r.value - 2.0).abs() <= 10.0 * r.error_estimate.max(1e-13));
    }

    #[test]
    fn arctan_gives_pi() {
        let spec = QuadratureSpec::new(0.0, 1.0).tol(1e-13);
        let r = tanh_sinh_plain(|x| 4.0 / (1.0 + x * x), &spec).unwrap();
        assert!((r.value - PI).abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn both_endpoints_singular() {
        // integral of 1/sqrt(x(1-x)) over (0,1) is pi
        let spec = QuadratureSpec::new(0.0, 1.0).singular(Singular::BOTH).tol(1e-12);
        let r = tanh_sinh(|_, dl, du| 1.0 / (dl * du).sqrt(), &spec).unwrap();
        assert!((r.value - PI).abs() < 1e-11, "{r:?}");
    }

    #[test]
    fn rejects_bad_interval() {
        assert!(tanh_sinh_plain(|x| x, &QuadratureSpec::new(1.0, 0.0)).is_err());
        assert!(tanh_sinh_plain(|x| x, &QuadratureSpec::new(0.0, 1.0).tol(0.0)).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let spec = QuadratureSpec::new(0.0, 1.0).tol(1e-30).levels(2);
        let e = tanh_sinh_plain(|x| (30.0 * x).sin(), &spec).unwrap_err();
        assert!(matches!(e, Error::QuadratureNotConverged { .. }));
    }

    #[test]
    fn non_finite_interior_value_is_an_error() {
        let spec = QuadratureSpec::new(-1.0, 1.0);
        let e = tanh_sinh_plain(|x| if x == 0.0 { f64::NAN } else { 1.0 }, &spec).unwrap_err();
        assert!(matches!(e, Error::NonFiniteIntegrand { .. }));
    }
}
