use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use l3_splitting::checks::{coordinate_checks, dynamics_checks, CheckSummary};
use l3_splitting::inner::{stokes_extract_with, StokesConfig, StokesEstimate};
use l3_splitting::manifolds::*;
use l3_splitting::numerics::ode::IntegratorConfig;
use l3_splitting::numerics::Precision;
use l3_splitting::pendulum::{constant_a_lambda_integral, constant_a_x_integral, ConstantAResult, SeparatrixHandle};
use l3_splitting::rpc3bp::{lagrange_points, LagrangeLabel, MuParam};
use l3_splitting::{Error, Result};

use super::{Cli, Command, Format, MethodArg, PrecisionArg, RunManifest, SectionArg, TrackArgs};

/// Largest admissible gap between the two quadrature routes for A.
const A_AGREEMENT: f64 = 1e-8;

pub fn run(cli: &Cli, man: &mut RunManifest) -> Result<()> {
    let fmt = |default: Format| if cli.global.json { Format::Json } else { cli.global.format.unwrap_or(default) };
    let out = cli.global.output.as_deref();
    match &cli.command {
        Command::Lagrange { mu } => lagrange(*mu, fmt(Format::Json), out, man),
        Command::ConstantA { tol, method } => constant_a(*tol, *method, fmt(Format::Json), out, man),
        Command::Separatrix { t_min, t_max, step } => separatrix(*t_min, *t_max, *step, fmt(Format::Csv), out),
        Command::Splitting {
            mu,
            section,
            theta,
            lambda_star,
            track,
        } => splitting(*mu, *section, *theta, *lambda_star, track, fmt(Format::Json), out, man),
        Command::Sweep {
            mu_grid,
            theta,
            fit,
            fit_output,
            workers,
            track,
        } => sweep(&mu_grid.values, *theta, *fit, fit_output.as_deref(), *workers, track, fmt(Format::Csv), out, man),
        Command::Stokes {
            rho,
            re_max,
            order,
            tol,
            max_spread,
            conjugate,
            samples_csv,
        } => {
            let cfg = StokesConfig {
                rhos: rho.clone(),
                re_start: *re_max,
                series_order: *order,
                rel_tol: *tol,
                spread_max: *max_spread,
                ..StokesConfig::default()
            };
            stokes(&cfg, *conjugate, samples_csv.as_deref(), out, man)
        }
        Command::CheckCoords { samples, seed, dynamics } => check_coords(*samples, *seed, *dynamics, out, man),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            so.flush()?;
        }
    }
    Ok(())
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Error::Io(e.to_string()))
}

fn precision_of(p: PrecisionArg) -> Option<Precision> {
    match p {
        PrecisionArg::Auto => None,
        PrecisionArg::Native => Some(Precision::Native),
        PrecisionArg::Compensated => Some(Precision::Compensated),
    }
}

fn splitting_config(t: &TrackArgs) -> Result<SplittingConfig> {
    let integrator = IntegratorConfig::with_tol(t.rel_tol, t.abs_tol.unwrap_or(t.rel_tol * 1e-3));
    integrator.validate()?;
    if !(t.horizon > 0.0) || !(t.min_distance > 0.0) {
        return Err(Error::Invalid("horizon and min-distance must be positive".into()));
    }
    Ok(SplittingConfig {
        seed_offset: t.eps,
        precision: precision_of(t.precision),
        track: TrackOptions {
            integrator,
            horizon_scaled: t.horizon,
            min_primary_distance: t.min_distance,
        },
        ..SplittingConfig::default()
    })
}

/// Largest gradient norm accepted at a computed equilibrium.
const GRADIENT_CHECK: f64 = 1e-11;

fn lagrange(mu: f64, fmt: Format, out: Option<&Path>, man: &mut RunManifest) -> Result<()> {
    let m = MuParam::new(mu)?;
    let set = lagrange_points(&m)?;
    let worst = set.points.iter().map(|p| p.gradient_norm).fold(0.0, f64::max);
    man.diag("lagrange", "max_gradient_norm", worst);
    let l3 = set.get(LagrangeLabel::L3);
    man.diag(
        "lagrange",
        "l3_hyperbolic_ratio",
        l3.eigenvalues[0].re / (mu.sqrt() * (21.0f64 / 8.0).sqrt()),
    );
    let text = match fmt {
        Format::Json => json(&set)?,
        Format::Csv => {
            let mut s = String::from("label,q1,q2,p1,p2,gradient_norm,ev1_re,ev1_im,ev2_re,ev2_im,ev3_re,ev3_im,ev4_re,ev4_im\n");
            for p in &set.points {
                let st = p.state;
                let _ = write!(s, "{:?},{:e},{:e},{:e},{:e},{:e}", p.label, st.q1, st.q2, st.p1, st.p2, p.gradient_norm);
                for e in &p.eigenvalues {
                    let _ = write!(s, ",{:e},{:e}", e.re, e.im);
                }
                s.push('\n');
            }
            s
        }
    };
    emit(out, &text)?;
    if worst > GRADIENT_CHECK {
        return Err(Error::Check(format!("equilibrium gradient norm {worst:e} exceeds {GRADIENT_CHECK:e}")));
    }
    Ok(())
}

#[derive(Serialize)]
struct ConstantAReport {
    tol: f64,
    reference: f64,
    results: Vec<ConstantAResult>,
    agreement: Option<f64>,
}

fn constant_a(tol: f64, method: MethodArg, fmt: Format, out: Option<&Path>, man: &mut RunManifest) -> Result<()> {
    if !(tol > 0.0 && tol < 1e-2) {
        return Err(Error::Invalid(format!("tolerance {tol:e} must lie in (0, 1e-2)")));
    }
    let mut results = Vec::new();
    if method != MethodArg::LambdaIntegral {
        results.push(constant_a_x_integral(tol)?);
    }
    if method != MethodArg::XIntegral {
        results.push(constant_a_lambda_integral(tol)?);
    }
    let agreement = (results.len() == 2).then(|| (results[0].value - results[1].value).abs());
    if let Some(a) = agreement {
        man.diag("constant-a", "agreement", a);
    }
    let report = ConstantAReport {
        tol,
        reference: A_REFERENCE,
        results,
        agreement,
    };
    let text = match fmt {
        Format::Json => json(&report)?,
        Format::Csv => {
            let mut s = String::from("method,value,error_estimate,levels\n");
            for r in &report.results {
                let method = serde_json::to_value(r.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                let _ = writeln!(s, "{method},{:.17e},{:e},{}", r.value, r.error_estimate, r.levels);
            }
            s
        }
    };
    emit(out, &text)?;
    match agreement {
        Some(a) if a > A_AGREEMENT.max(10.0 * tol) => Err(Error::Check(format!("the two quadrature routes differ by {a:e}"))),
        _ => Ok(()),
    }
}

fn separatrix(t_min: f64, t_max: f64, step: f64, fmt: Format, out: Option<&Path>) -> Result<()> {
    if !(step > 0.0) || !(t_max >= t_min) {
        return Err(Error::Invalid("need step > 0 and t_max ≥ t_min".into()));
    }
    let n = ((t_max - t_min) / step).round() as usize;
    if n > 10_000_000 {
        return Err(Error::Invalid(format!("{n} samples requested; increase the step")));
    }
    let handle = SeparatrixHandle::standard()?;
    let samples: Vec<_> = (0..=n).map(|k| handle.sample(t_min + k as f64 * step)).collect();
    let text = match fmt {
        Format::Json => json(&samples)?,
        Format::Csv => {
            let mut s = String::from("t,lambda_h,Lambda_h\n");
            for p in &samples {
                let _ = writeln!(s, "{:e},{:.17e},{:.17e}", p.t, p.lambda_h, p.big_lambda_h);
            }
            s
        }
    };
    emit(out, &text)
}

#[allow(clippy::too_many_arguments)]
fn splitting(
    mu: f64,
    section: SectionArg,
    theta: f64,
    lambda_star: f64,
    track: &TrackArgs,
    fmt: Format,
    out: Option<&Path>,
    man: &mut RunManifest,
) -> Result<()> {
    let m = MuParam::new(mu)?;
    let cfg = splitting_config(track)?;
    man.diag("splitting", "precision", cfg.precision_for(mu).as_str());
    let (text, gap) = match section {
        SectionArg::Theta => {
            let r = splitting_distance(&m, theta, &cfg)?;
            let text = match fmt {
                Format::Json => json(&r)?,
                Format::Csv => SWEEP_HEADER.to_string() + &sweep_row(&Ok(r.clone()), mu, theta),
            };
            (text, Some(r.energy_gap))
        }
        SectionArg::Lambda => {
            let r = scaled_section_splitting(&m, lambda_star, &cfg)?;
            let text = match fmt {
                Format::Json => json(&r)?,
                Format::Csv => format!(
                    "mu,lambda_star,abs_dx,abs_dy,abs_dLambda,theta_estimate,tof_u,tof_s,precision\n{:e},{},{:e},{:e},{:e},{},{},{},{}\n",
                    r.mu,
                    r.lambda_star,
                    r.abs_dx,
                    r.abs_dy,
                    r.abs_d_big_lambda,
                    r.theta_estimate,
                    r.tof_u,
                    r.tof_s,
                    r.precision.as_str()
                ),
            };
            (text, None)
        }
    };
    emit(out, &text)?;
    if let Some(g) = gap {
        man.diag("splitting", "energy_gap", g);
        if g.abs() > 1e-10 {
            return Err(Error::Check(format!("energy gap {g:e} between the crossings exceeds 1e-10")));
        }
    }
    Ok(())
}

const SWEEP_HEADER: &str = "mu,theta_star,d,C,delta_r,delta_R,delta_G,tof_u,tof_s,precision,status\n";

fn sweep_row(r: &Result<SplittingReport>, mu: f64, theta: f64) -> String {
    match r {
        Ok(r) => format!(
            "{:e},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},ok\n",
            r.mu,
            r.theta_star,
            r.d,
            r.c,
            r.delta_r,
            r.delta_big_r,
            r.delta_g,
            r.tof_u,
            r.tof_s,
            r.precision.as_str()
        ),
        Err(e) => {
            let status = if e.is_validation() { "validation-error" } else { "numerical-failure" };
            format!("{mu:e},{theta},,,,,,,,,{status}\n")
        }
    }
}

#[derive(Serialize)]
struct SweepJson<'a> {
    reports: Vec<&'a SplittingReport>,
    failures: Vec<(f64, String)>,
    fit: Option<&'a AsymptoticFit>,
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    mus: &[f64],
    theta: f64,
    fit: bool,
    fit_output: Option<&Path>,
    workers: Option<usize>,
    track: &TrackArgs,
    fmt: Format,
    out: Option<&Path>,
    man: &mut RunManifest,
) -> Result<()> {
    Section::Theta(theta).validate()?;
    let cfg = splitting_config(track)?;
    let params: Vec<MuParam> = mus.iter().map(|&v| MuParam::new(v)).collect::<Result<_>>()?;
    let pool = match workers {
        Some(0) => return Err(Error::Invalid("worker count must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| Error::Invalid(format!("cannot start the worker pool: {e}")))?;
    man.diag("sweep", "workers", pool.current_num_threads());
    // each point is independent; collect() keeps grid order
    let results: Vec<Result<SplittingReport>> =
        pool.install(|| params.par_iter().map(|m| splitting_distance(m, theta, &cfg)).collect());
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (mu, r) in mus.iter().zip(&results) {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => {
                man.warn(format!("μ = {mu:e}: {e}"));
                failures.push((*mu, e.to_string()));
            }
        }
    }
    let fitted = if fit {
        let owned: Vec<SplittingReport> = ok.iter().map(|r| (*r).clone()).collect();
        match fit_asymptotics(&owned) {
            Ok(f) => {
                man.diag("fit", "A_hat", f.a_hat);
                man.diag("fit", "A_hat_rel_error", (f.a_hat - f.a_reference).abs() / f.a_reference);
                man.diag("fit", "c0_hat", f.c0_hat);
                Some(f)
            }
            Err(e) => {
                man.warn(format!("fit skipped: {e}"));
                None
            }
        }
    } else {
        None
    };
    let text = match fmt {
        Format::Csv => {
            let mut s = SWEEP_HEADER.to_string();
            for (mu, r) in mus.iter().zip(&results) {
                s += &sweep_row(r, *mu, theta);
            }
            s
        }
        Format::Json => json(&SweepJson {
            reports: ok.clone(),
            failures: failures.clone(),
            fit: fitted.as_ref(),
        })?,
    };
    emit(out, &text)?;
    if let (Some(f), Format::Csv) = (&fitted, fmt) {
        let fj = json(f)?;
        match fit_output {
            Some(p) => std::fs::write(p, fj)?,
            None => eprint!("{fj}"),
        }
    }
    if let Some((mu, msg)) = failures.first() {
        return Err(Error::Check(format!(
            "{} of {} sweep points failed (first: μ = {mu:e}: {msg})",
            failures.len(),
            mus.len()
        )));
    }
    if fit && fitted.is_none() {
        return Err(Error::Check("the asymptotic fit could not be computed".into()));
    }
    Ok(())
}

fn theta_csv(e: &StokesEstimate) -> String {
    let mut s = String::from("rho,re_u,im_u,theta_re,theta_im,abs_theta\n");
    for r in &e.per_rho {
        for (re, th) in &r.samples {
            let _ = writeln!(s, "{},{},{},{:.17e},{:.17e},{:.17e}", r.rho, re, -r.rho, th.re, th.im, th.norm());
        }
    }
    s
}

#[derive(Serialize)]
struct StokesReport {
    estimate: StokesEstimate,
    conjugate: Option<StokesEstimate>,
}

fn stokes(cfg: &StokesConfig, conjugate: bool, samples_csv: Option<&Path>, out: Option<&Path>, man: &mut RunManifest) -> Result<()> {
    if cfg.rhos.iter().any(|&r| !(r >= 5.0)) {
        return Err(Error::Invalid("every path level ρ must be at least 5".into()));
    }
    let estimate = stokes_extract_with(cfg, false)?;
    man.diag("stokes", "abs_theta", estimate.abs_theta);
    man.diag("stokes", "spread", estimate.spread);
    let conj = if conjugate {
        let c = stokes_extract_with(cfg, true)?;
        let gap = (c.theta - estimate.theta.conj()).norm() / estimate.abs_theta;
        man.diag("stokes", "conjugate_gap", gap);
        if gap > cfg.spread_max {
            return Err(Error::Check(format!("conjugate pipeline disagrees with conj(Θ) by {gap:e}")));
        }
        Some(c)
    } else {
        None
    };
    if let Some(p) = samples_csv {
        std::fs::write(p, theta_csv(&estimate))?;
    }
    emit(
        out,
        &json(&StokesReport {
            estimate,
            conjugate: conj,
        })?,
    )
}

#[derive(Serialize)]
struct CheckReport {
    coordinates: CheckSummary,
    dynamics: Option<CheckSummary>,
    all_passed: bool,
}

fn check_coords(samples: usize, seed: u64, dynamics: bool, out: Option<&Path>, man: &mut RunManifest) -> Result<()> {
    if samples == 0 {
        return Err(Error::Invalid("at least one sample is required".into()));
    }
    let coordinates = coordinate_checks(samples, seed)?;
    let dynamics = if dynamics { Some(dynamics_checks(4, seed)?) } else { None };
    let all_passed = coordinates.all_passed && dynamics.as_ref().is_none_or(|d| d.all_passed);
    let failed: Vec<String> = coordinates
        .checks
        .iter()
        .chain(dynamics.iter().flat_map(|d| d.checks.iter()))
        .filter(|c| !c.passed)
        .map(|c| c.name.clone())
        .collect();
    man.diag("check-coords", "failed", &failed);
    emit(
        out,
        &json(&CheckReport {
            coordinates,
            dynamics,
            all_passed,
        })?,
    )?;
    if !failed.is_empty() {
        return Err(Error::Check(format!("property checks failed: {}", failed.join(", "))));
    }
    Ok(())
}
