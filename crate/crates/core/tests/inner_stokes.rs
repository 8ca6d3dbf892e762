use l3_splitting::inner::*;
use num_complex::Complex64 as C;

fn series() -> InnerSeries {
    InnerSeries::compute(130).unwrap()
}

fn norm(z: &[C; 3]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn seed_abscissa_refinement() {
    let s = series();
    for rho in [8.0, 12.0] {
        let a = solve_branch(InnerKind::Unstable, &InnerPath::new(rho, 30.0), &s, &[-10.0]).unwrap();
        let b = solve_branch(InnerKind::Unstable, &InnerPath::new(rho, 60.0), &s, &[-10.0]).unwrap();
        let (za, zb) = (a.samples[0].z(), b.samples[0].z());
        let d = norm(&[za[0] - zb[0], za[1] - zb[1], za[2] - zb[2]]);
        assert!(d <= 1e-3 * norm(&zb), "ρ = {rho}: {d:e}");
    }
}

#[test]
fn weighted_decay_bound_along_path() {
    let s = series();
    let pts: Vec<f64> = (0..20).map(|k| -38.0 + 2.0 * k as f64).collect();
    let sol = solve_branch(InnerKind::Unstable, &InnerPath::new(8.0, 40.0), &s, &pts).unwrap();
    let bound = sol
        .samples
        .iter()
        .map(|st| norm(&st.z()) * st.u.norm().powf(4.0 / 3.0))
        .fold(0.0, f64::max);
    assert!(bound < 1.0, "{bound}");
    assert!(sol.weighted_bound < 1.0);
}

#[test]
fn reflection_symmetry_of_solutions() {
    let s = series();
    for rho in [8.0, 12.0] {
        let d = symmetry_defect(&InnerPath::new(rho, 40.0), &s, &[-6.0, -2.0, 0.0, 3.0, 7.0]).unwrap();
        assert!(d < 1e-6, "{d:e}");
    }
}

#[test]
fn plug_back_residual_is_at_tolerance() {
    let s = series();
    let path = InnerPath::new(10.0, 40.0);
    let pts: Vec<f64> = (0..12).map(|k| -30.0 + 3.0 * k as f64).collect();
    for kind in [InnerKind::Unstable, InnerKind::Stable] {
        let p: Vec<f64> = if kind == InnerKind::Stable { pts.iter().map(|a| -a).collect() } else { pts.clone() };
        let sol = solve_branch(kind, &path, &s, &p).unwrap();
        let r = plug_back_residual(&sol, &path).unwrap();
        assert!(r <= 10.0 * path.integrator.rel_tol, "{r:e}");
    }
}

#[test]
fn stokes_constant_modulus_and_stability() {
    let est = stokes_extract(&StokesConfig::default()).unwrap();
    assert!((est.abs_theta - 1.63).abs() <= 0.08, "{}", est.abs_theta);
    assert!(est.spread <= 0.01, "{}", est.spread);
    for r in &est.per_rho {
        assert!((r.theta.norm() - est.abs_theta).abs() <= 0.01 * est.abs_theta);
    }
}

#[test]
fn conjugate_pipeline_returns_conjugate() {
    let cfg = StokesConfig::default();
    let a = stokes_extract(&cfg).unwrap();
    let b = stokes_extract_with(&cfg, true).unwrap();
    assert!((b.theta - a.theta.conj()).norm() <= a.spread.max(1e-9) * a.abs_theta);
}

#[test]
fn differences_decay_exponentially_in_rho() {
    let cfg = StokesConfig {
        rhos: vec![8.0, 16.0],
        eval_points: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        ..StokesConfig::default()
    };
    let est = stokes_extract(&cfg).unwrap();
    let (lo, hi) = (&est.per_rho[0], &est.per_rho[1]);
    // W and X carry the extra algebraic factors U^{-7/3} and U^{-2}
    let powers = [7.0 / 3.0, 2.0, 0.0];
    for k in 0..3 {
        let u_lo = C::new(0.0, -8.0).norm();
        let u_hi = C::new(0.0, -16.0).norm();
        let a = lo.delta[2][k].norm() * u_lo.powf(powers[k]);
        let b = hi.delta[2][k].norm() * u_hi.powf(powers[k]);
        let slope = (b / a).ln() / 8.0;
        assert!((slope + 1.0).abs() <= 0.05, "component {k}: {slope}");
    }
}

#[test]
fn first_difference_component_is_subdominant() {
    let est = stokes_extract(&StokesConfig::default()).unwrap();
    for r in &est.per_rho {
        for ((re, _), d) in r.samples.iter().zip(&r.delta) {
            let u = C::new(*re, -r.rho);
            assert!(d[2].norm() >= u.norm().powf(4.0 / 3.0) * d[0].norm(), "ρ = {} Re U = {re}", r.rho);
        }
    }
}

#[test]
fn theta_varies_like_inverse_u() {
    let est = stokes_extract(&StokesConfig::default()).unwrap();
    for r in &est.per_rho {
        for (re, th) in &r.samples {
            let u = C::new(*re, -r.rho);
            let rel = (th - r.theta).norm() / r.theta.norm();
            // |θ(U) − Θ| ≤ c/|U| with a modest fitted c
            assert!(rel * u.norm() < 2.0 * r.correction.norm().max(0.05), "{rel}");
        }
    }
}

#[test]
fn path_and_config_errors() {
    let s = series();
    assert!(solve_branch(InnerKind::Unstable, &InnerPath::new(3.0, 40.0), &s, &[0.0]).is_err());
    assert!(solve_branch(InnerKind::Unstable, &InnerPath::new(8.0, 40.0), &s, &[50.0]).is_err());
    let cfg = StokesConfig {
        rhos: vec![],
        ..StokesConfig::default()
    };
    assert!(stokes_extract(&cfg).is_err());
    // e^{-40} is far below double precision
    let cfg = StokesConfig {
        rhos: vec![40.0],
        ..StokesConfig::default()
    };
    assert!(matches!(stokes_extract(&cfg), Err(l3_splitting::Error::NumericalFloor(_))));
}
