//! Scalar root finding: Brent's method on a bracket and a Newton iteration
//! that falls back to bisection whenever it leaves the bracket.

use super::scalar::Real;
use crate::error::{Error, Result};

/// Convergence criteria shared by the root finders.
#[derive(Copy, Clone, Debug)]
pub struct RootTol {
    /// Absolute residual accepted as a root.
    pub f_tol: f64,
    /// Absolute bracket width accepted as converged.
    pub x_tol: f64,
    pub max_iter: usize,
}

impl RootTol {
    pub fn new(f_tol: f64) -> Self {
        Self {
            f_tol,
            x_tol: 0.0,
            max_iter: 200,
        }
    }

    pub fn with_x_tol(mut self, x_tol: f64) -> Self {
        self.x_tol = x_tol;
        self
    }
}

/// Brent's method. Requires `f(a)` and `f(b)` of opposite sign (or one of them zero).
pub fn brent<T: Real>(mut f: impl FnMut(T) -> T, a: T, b: T, tol: RootTol) -> Result<T> {
    let eps = T::PRECISION.unit_roundoff() * 2.0;
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::NonFiniteEvent { t: a.to_f64() });
    }
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if fa.signum_f64() == fb.signum_f64() {
        return Err(Error::NoSignChange {
            a: a.to_f64(),
            b: b.to_f64(),
        });
    }
    let half = T::from_f64(0.5);
    let two = T::from_f64(2.0);
    let three = T::from_f64(3.0);
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..tol.max_iter {
        if fb.signum_f64() == fc.signum_f64() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = T::from_f64(2.0 * eps) * b.abs() + T::from_f64(0.5 * tol.x_tol);
        let xm = half * (c - b);
        if fb.abs().to_f64() <= tol.f_tol || xm.abs() <= tol1 || fb == T::zero() {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (two * xm * s, T::one() - s)
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                (
                    s * (two * xm * q0 * (q0 - r) - (b - a) * (r - T::one())),
                    (q0 - T::one()) * (r - T::one()) * (s - T::one()),
                )
            };
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = three * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += if xm > T::zero() { tol1 } else { -tol1 };
        }
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::NonFiniteEvent { t: b.to_f64() });
        }
    }
    Err(Error::RootNotConverged {
        iterations: tol.max_iter,
    })
}

/// Newton's method on `f_df(x) = (f(x), f'(x))`.
///
/// With a bracket, every iterate that leaves it (or a vanishing derivative)
/// is replaced by a bisection step, so the iteration always converges.
/// Without a bracket a vanishing derivative is an error.
pub fn newton<T: Real>(
    mut f_df: impl FnMut(T) -> (T, T),
    x0: T,
    bracket: Option<(T, T)>,
    tol: RootTol,
) -> Result<T> {
    let mut x = x0;
    let mut br = match bracket {
        Some((a, b)) => {
            let (fa, _) = f_df(a);
            let (fb, _) = f_df(b);
            if fa == T::zero() {
                return Ok(a);
            }
            if fb == T::zero() {
                return Ok(b);
            }
            if fa.signum_f64() == fb.signum_f64() {
                return Err(Error::NoSignChange {
                    a: a.to_f64(),
                    b: b.to_f64(),
                });
            }
            // orient so that f(lo) < 0 < f(hi)
            Some(if fa.to_f64() < 0.0 { (a, b) } else { (b, a) })
        }
        None => None,
    };
    let half = T::from_f64(0.5);
    for _ in 0..tol.max_iter {
        let (fx, dfx) = f_df(x);
        if !fx.is_finite() || !dfx.is_finite() {
            return Err(Error::NonFiniteEvent { t: x.to_f64() });
        }
        if fx.abs().to_f64() <= tol.f_tol {
            return Ok(x);
        }
        if let Some((lo, hi)) = br.as_mut() {
            if fx.to_f64() < 0.0 {
                *lo = x;
            } else {
                *hi = x;
            }
            let width = (*hi - *lo).abs().to_f64();
            if width <= tol.x_tol {
                return Ok(x);
            }
            let mid = half * (*lo + *hi);
            let next = if dfx == T::zero() { mid } else { x - fx / dfx };
            let inside = {
                let (a, b) = if *lo < *hi { (*lo, *hi) } else { (*hi, *lo) };
                next > a && next < b
            };
            let next = if inside { next } else { mid };
            if next == x {
                return Ok(x);
            }
            x = next;
        } else {
            if dfx == T::zero() {
                return Err(Error::DerivativeVanished { x: x.to_f64() });
            }
            let step = fx / dfx;
            x -= step;
            if step.abs().to_f64() <= tol.x_tol {
                return Ok(x);
            }
        }
    }
    Err(Error::RootNotConverged {
        iterations: tol.max_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dd::DoubleDouble;

    /// Plain bisection, kept independent of the finders under test.
    fn bisection(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
        let mut fa = f(a);
        while b - a > tol {
            let m = 0.5 * (a + b);
            let fm = f(m);
            if (fm < 0.0) == (fa < 0.0) {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn sqrt_two_by_brent() {
        let r = brent(|x: f64| x * x - 2.0, 1.0, 2.0, RootTol::new(1e-14)).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn identity_root_is_zero() {
        let r = brent(|x: f64| x, -1.0, 1.0, RootTol::new(1e-15)).unwrap();
        assert!(r.abs() < 1e-15);
    }

    #[test]
    fn kepler_root_matches_bisection_oracle() {
        let f = |e: f64| e - 0.1 * e.sin() - 1.0;
        let oracle = bisection(f, 0.0, 2.0, 1e-15);
        let r = brent(f, 0.0, 2.0, RootTol::new(1e-15)).unwrap();
        assert!((r - oracle).abs() < 1e-12);
        assert!((r - 1.08858).abs() < 5e-5);
        let n = newton(|e: f64| (f(e), 1.0 - 0.1 * e.cos()), 1.0, None, RootTol::new(1e-15)).unwrap();
        assert!((n - oracle).abs() < 1e-12);
    }

    #[test]
    fn no_sign_change_is_reported() {
        let e = brent(|x: f64| x * x + 1.0, -1.0, 1.0, RootTol::new(1e-12)).unwrap_err();
        assert!(matches!(e, Error::NoSignChange { .. }));
    }

    #[test]
    fn newton_without_bracket_rejects_flat_derivative() {
        let e = newton(|x: f64| (x * x + 1.0, 2.0 * x), 0.0, None, RootTol::new(1e-12)).unwrap_err();
        assert!(matches!(e, Error::DerivativeVanished { .. }));
    }

    #[test]
    fn bracketed_newton_survives_flat_derivative() {
        // f'(0) = 0 at the initial guess; the bracket forces bisection
        let r = newton(|x: f64| (x * x * x - 0.5, 3.0 * x * x), 0.0, Some((-1.0, 2.0)), RootTol::new(1e-14))
            .unwrap();
        assert!((r - 0.5f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn brent_in_double_word() {
        let two = DoubleDouble::from_f64(2.0);
        let r = brent(
            |x: DoubleDouble| x * x - two,
            DoubleDouble::from_f64(1.0),
            DoubleDouble::from_f64(2.0),
            RootTol::new(1e-31),
        )
        .unwrap();
        assert!((r - two.sqrt()).abs().to_f64() < 1e-30);
    }
}
