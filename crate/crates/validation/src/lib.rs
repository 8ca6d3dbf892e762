//! Acceptance criteria for the splitting laboratory.
//!
//! Each criterion runs a fixed computation, compares it with pinned
//! tolerances and reports a single verdict with details.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use l3_splitting::checks::{coordinate_checks, dynamics_checks, CheckSummary};
use l3_splitting::inner::{stokes_extract, StokesConfig};
use l3_splitting::manifolds::{
    fit_asymptotics, scaled_section_splitting, splitting_distance, SplittingConfig, SplittingReport, TrackOptions,
};
use l3_splitting::numerics::Precision;
use l3_splitting::pendulum::{
    constant_a_lambda_integral, constant_a_x_integral, pendulum_rhs, potential_d2v, saddle_eigenvalues, PendulumState,
};
use l3_splitting::rpc3bp::{l3_state, linearize, MuParam};
use l3_splitting::Result;

/// Reference value of the singularity constant.
pub const A_REF: f64 = 0.177744;
/// Reference modulus of the Stokes constant.
pub const THETA_REF: f64 = 1.63;

#[derive(Clone, Debug)]
pub struct Verdict {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    /// Supplementary measurements that do not affect the verdict.
    pub info: Vec<String>,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} {:<32} {} ({:.2} s): {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

struct Builder {
    id: u8,
    name: &'static str,
    start: Instant,
    ok: bool,
    parts: Vec<String>,
    info: Vec<String>,
}

impl Builder {
    fn new(id: u8, name: &'static str) -> Self {
        Self {
            id,
            name,
            start: Instant::now(),
            ok: true,
            parts: Vec::new(),
            info: Vec::new(),
        }
    }

    fn check(&mut self, passed: bool, msg: String) {
        self.ok &= passed;
        self.parts.push(if passed { msg } else { format!("[x] {msg}") });
    }

    fn info(&mut self, msg: String) {
        self.info.push(msg);
    }

    fn runtime(&mut self, limit: Duration) {
        let e = self.start.elapsed();
        self.check(e <= limit, format!("runtime {:.2} s <= {} s", e.as_secs_f64(), limit.as_secs()));
    }

    fn finish(self) -> Verdict {
        Verdict {
            id: self.id,
            name: self.name,
            passed: self.ok,
            detail: self.parts.join("; "),
            elapsed: self.start.elapsed(),
            info: self.info,
        }
    }

    fn fail(mut self, e: impl fmt::Display) -> Verdict {
        self.check(false, format!("error: {e}"));
        self.finish()
    }
}

fn attempt(b: Builder, f: impl FnOnce(&mut Builder) -> Result<()>) -> Verdict {
    let mut b = b;
    match f(&mut b) {
        Ok(()) => b.finish(),
        Err(e) => b.fail(e),
    }
}

/// Logarithmic grid with exact endpoints.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let r = (hi / lo).ln();
    (0..n)
        .map(|k| match k {
            0 => lo,
            k if k == n - 1 => hi,
            k => lo * (r * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    sxy / sxx
}

fn line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let b = slope(xs, ys);
    let n = xs.len() as f64;
    ((ys.iter().sum::<f64>() - b * xs.iter().sum::<f64>()) / n, b)
}

pub fn constant_a() -> Verdict {
    attempt(Builder::new(1, "constant A"), |b| {
        let x = constant_a_x_integral(1e-12)?;
        let l = constant_a_lambda_integral(1e-12)?;
        b.check((x.value - A_REF).abs() <= 1e-6, format!("x-integral {:.12} vs {A_REF} (tol 1e-6)", x.value));
        let gap = (x.value - l.value).abs();
        b.check(gap <= 1e-8, format!("lambda-integral gap {gap:.2e} <= 1e-8"));
        b.runtime(Duration::from_secs(1));
        Ok(())
    })
}

pub fn pendulum_saddle() -> Verdict {
    attempt(Builder::new(2, "pendulum saddle"), |b| {
        let v2 = potential_d2v(0.0)?;
        b.check((v2 - 0.875).abs() <= 1e-12, format!("V''(0) - 7/8 = {:.1e}", v2 - 0.875));
        let (p, m) = saddle_eigenvalues()?;
        let nu = (21.0f64 / 8.0).sqrt();
        b.check(
            (p - nu).abs() <= 1e-12 && (m + nu).abs() <= 1e-12,
            format!("eigenvalues {p:.15}, {m:.15} vs ±{nu:.15}"),
        );
        // independent: central-difference Jacobian of the slow field at the saddle
        let h = 1e-5;
        let f = |l: f64, bl: f64| pendulum_rhs(&PendulumState { lambda: l, big_lambda: bl });
        let (a, c) = (f(h, 0.0)?, f(-h, 0.0)?);
        let (d, e) = (f(0.0, h)?, f(0.0, -h)?);
        let j = [
            [(a.lambda - c.lambda) / (2.0 * h), (d.lambda - e.lambda) / (2.0 * h)],
            [(a.big_lambda - c.big_lambda) / (2.0 * h), (d.big_lambda - e.big_lambda) / (2.0 * h)],
        ];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let tr = j[0][0] + j[1][1];
        b.info(format!("finite-difference saddle rate {:.10}", (tr * tr / 4.0 - det).sqrt()));
        b.runtime(Duration::from_secs(1));
        Ok(())
    })
}

pub fn l3_spectrum() -> Verdict {
    attempt(Builder::new(3, "L3 spectrum"), |b| {
        let nu = (21.0f64 / 8.0).sqrt();
        let mut deviations = Vec::new();
        for mu in [1e-2, 1e-3, 1e-4] {
            let m = MuParam::new(mu)?;
            let lin = linearize(&l3_state(&m)?, &m)?;
            let ratio = lin.hyperbolic_rate() / (mu.sqrt() * nu);
            let om = (lin.elliptic_frequency() - 1.0) / mu;
            if mu == 1e-3 {
                b.check((0.9..=1.1).contains(&ratio), format!("hyperbolic ratio {ratio:.6} in [0.9, 1.1]"));
                b.check((0.855..=0.895).contains(&om), format!("(omega-1)/mu {om:.6} in [0.855, 0.895]"));
            }
            deviations.push((ratio - 1.0).abs());
        }
        b.check(
            deviations.windows(2).all(|w| w[1] < w[0]),
            format!("|ratio-1| = {:.2e}, {:.2e}, {:.2e} decreasing", deviations[0], deviations[1], deviations[2]),
        );
        b.runtime(Duration::from_secs(5));
        Ok(())
    })
}

fn sweep(mus: &[f64], cfg: &SplittingConfig) -> Vec<(f64, Result<SplittingReport>, Duration)> {
    mus.par_iter()
        .map(|&mu| {
            let t = Instant::now();
            let r = MuParam::new(mu).and_then(|m| splitting_distance(&m, FRAC_PI_2, cfg));
            (mu, r, t.elapsed())
        })
        .collect()
}

fn collect(runs: Vec<(f64, Result<SplittingReport>, Duration)>) -> Result<(Vec<SplittingReport>, Duration)> {
    let slowest = runs.iter().map(|r| r.2).max().unwrap_or_default();
    let reports = runs.into_iter().map(|(_, r, _)| r).collect::<Result<Vec<_>>>()?;
    Ok((reports, slowest))
}

/// Native sweep over [1e-3, 2e-2].
pub fn native_sweep() -> Result<Vec<SplittingReport>> {
    let cfg = SplittingConfig {
        precision: Some(Precision::Native),
        ..SplittingConfig::default()
    };
    Ok(collect(sweep(&log_grid(1e-3, 2e-2, 8), &cfg))?.0)
}

pub fn splitting_rate(native: &Result<Vec<SplittingReport>>, elapsed: Duration) -> Verdict {
    let mut v = attempt(Builder::new(4, "exponential splitting rate"), |b| {
        let reports = native.as_ref().map_err(Clone::clone)?;
        let fit = fit_asymptotics(reports)?;
        let rel = (fit.a_hat - A_REF).abs() / A_REF;
        b.check(
            rel <= 0.03,
            format!("A_hat {:.6} over {} native points in [1e-3, 2e-2], rel. error {:.3} <= 0.03", fit.a_hat, fit.n, rel),
        );
        b.check(elapsed <= Duration::from_secs(300), format!("sweep {:.2} s <= 300 s", elapsed.as_secs_f64()));
        let (r0, r1) = (&reports[0], &reports[1]);
        let two_point = ((r1.d * r1.mu.powf(-1.0 / 3.0)).ln() - (r0.d * r0.mu.powf(-1.0 / 3.0)).ln())
            / (1.0 / r0.mu.sqrt() - 1.0 / r1.mu.sqrt());
        b.info(format!("two-point rate at the two smallest masses {two_point:.6}"));
        b.info(format!(
            "C(mu): {}",
            reports.iter().map(|r| format!("{:.3e}->{:.3}", r.mu, r.c)).collect::<Vec<_>>().join(", ")
        ));
        Ok(())
    });
    v.elapsed = elapsed;
    v
}

pub fn splitting_prefactor(native: &Result<Vec<SplittingReport>>) -> Verdict {
    attempt(Builder::new(5, "splitting prefactor"), |b| {
        let mut reports = native.as_ref().map_err(Clone::clone)?.clone();
        let cfg = SplittingConfig {
            precision: Some(Precision::Compensated),
            track: TrackOptions::with_tol(1e-13),
            ..SplittingConfig::default()
        };
        let mut small = log_grid(1e-4, 1e-3, 6);
        small.pop();
        let (comp, slowest) = collect(sweep(&small, &cfg))?;
        b.check(slowest <= Duration::from_secs(600), format!("slowest compensated run {:.2} s <= 600 s", slowest.as_secs_f64()));
        reports.extend(comp.iter().cloned());
        let fit = fit_asymptotics(&reports)?;
        let target = 4f64.cbrt() * THETA_REF;
        let rel = (fit.c0_hat - target).abs() / target;
        b.check(
            rel <= 0.2,
            format!("c0 {:.4} ({} points in [1e-4, 2e-2]) vs {:.4}, rel. error {:.3} <= 0.2", fit.c0_hat, fit.n, target, rel),
        );
        b.info(format!(
            "compensated C(mu): {}",
            comp.iter().map(|r| format!("{:.3e}->{:.4}", r.mu, r.c)).collect::<Vec<_>>().join(", ")
        ));
        let deltas: Vec<f64> = comp.iter().map(|r| r.mu.sqrt().sqrt()).collect();
        let cs: Vec<f64> = comp.iter().map(|r| r.c).collect();
        let (c0, c1) = line(&deltas, &cs);
        b.info(format!("alternative fit on compensated points: C = {c0:.4} + {c1:.3} delta"));
        let small_only = fit_asymptotics(&comp.iter().cloned().chain(reports.iter().take(1).cloned()).collect::<Vec<_>>());
        if let Ok(f) = small_only {
            b.info(format!("1/|ln mu| fit on [1e-4, 1e-3] only: c0 {:.4}", f.c0_hat));
        }
        Ok(())
    })
}

pub fn stokes_constant() -> Verdict {
    attempt(Builder::new(6, "Stokes constant"), |b| {
        let est = stokes_extract(&StokesConfig::default())?;
        b.check(
            (est.abs_theta - THETA_REF).abs() <= 0.08,
            format!("|Theta| {:.5} vs {THETA_REF} ± 0.08", est.abs_theta),
        );
        b.check(est.spread <= 0.01, format!("spread {:.2e} over rho = 8, 12, 16 <= 0.01", est.spread));
        b.info(format!(
            "Theta = {:.6} {:+.6}i, arg/pi = {:.6}",
            est.theta.re,
            est.theta.im,
            est.theta.arg() / std::f64::consts::PI
        ));
        b.runtime(Duration::from_secs(300));
        Ok(())
    })
}

pub fn scaled_section() -> Verdict {
    attempt(Builder::new(7, "scaled section structure"), |b| {
        let cfg = SplittingConfig {
            precision: Some(Precision::Compensated),
            track: TrackOptions::with_tol(1e-14),
            ..SplittingConfig::default()
        };
        let mus = [1e-3, 5e-4, 2.5e-4, 1e-4];
        let reports = mus
            .par_iter()
            .map(|&mu| scaled_section_splitting(&MuParam::new(mu)?, 1.0, &cfg))
            .collect::<Result<Vec<_>>>()?;
        let sym = reports.iter().map(|r| (r.abs_dx - r.abs_dy).abs() / r.abs_dx).fold(0.0, f64::max);
        b.check(sym <= 1e-13, format!("max ||dx|-|dy||/|dx| {sym:.1e} <= 1e-13"));
        let ratios: Vec<f64> = reports.iter().map(|r| r.abs_d_big_lambda / r.abs_dx).collect();
        b.check(
            ratios.windows(2).all(|w| w[1] < w[0]),
            format!(
                "|dLambda|/|dx| = {} decreasing",
                ratios.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(", ")
            ),
        );
        let xs: Vec<f64> = reports.iter().map(|r| r.delta.ln()).collect();
        let ys: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
        let e = slope(&xs, &ys);
        b.check(e >= 0.5, format!("delta-exponent {e:.3} >= 0.5"));
        b.info(format!(
            "theta estimates: {}",
            reports.iter().map(|r| format!("{:.1e}->{:.3}", r.mu, r.theta_estimate)).collect::<Vec<_>>().join(", ")
        ));
        Ok(())
    })
}

fn summarize(b: &mut Builder, s: &CheckSummary) {
    for c in &s.checks {
        b.check(c.passed, format!("{} {:.2e} in [{:.0e}, {:.0e}]", c.name, c.value, c.bounds.0, c.bounds.1));
    }
}

pub fn property_suites() -> Verdict {
    attempt(Builder::new(8, "property suites"), |b| {
        summarize(b, &coordinate_checks(1000, 42)?);
        summarize(b, &dynamics_checks(100, 42)?);
        Ok(())
    })
}
