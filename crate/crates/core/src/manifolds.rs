//! One-dimensional invariant manifolds of L3, their crossings with the
//! sections Σ(θ*) and S(λ*), the splitting distance and asymptotic fits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coords::{
    cart_to_polar, cart_to_scaled, from_separatrix_coords, to_separatrix_coords, EquilibriumShift, PolarState,
    ScaledState, SeparatrixCoordState,
};
use crate::error::{Error, Result};
use crate::numerics::ode::{integrate_sampled, integrate_to_event_observed, Direction, EventSpec, IntegratorConfig};
use crate::numerics::{DoubleDouble, Precision, Real};
use crate::pendulum::{constant_a_x_integral, lambda0, scaled_hamiltonian, Branch, SeparatrixHandle};
use crate::rpc3bp::{field, hamiltonian_h, involution_phi, l3_state, linearize, CartesianState, MuParam};

/// Reference value of A used when normalizing splittings.
pub const A_REFERENCE: f64 = 0.177744;

/// Smallest μ accepted by the splitting computations.
pub const MU_FLOOR: f64 = 3e-5;

/// Below this μ the compensated mode is required.
pub const MU_NATIVE_MIN: f64 = 1e-3;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Unstable,
    Stable,
}

/// `Plus` is the branch leaving L3 into q2 > 0.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchSign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl BranchSign {
    fn value(self) -> f64 {
        match self {
            BranchSign::Plus => 1.0,
            BranchSign::Minus => -1.0,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldBranch {
    pub mu: MuParam,
    pub kind: ManifoldKind,
    pub sign: BranchSign,
    pub seed_offset: f64,
    pub seed_state: CartesianState,
    pub precision: Precision,
    pub l3: CartesianState,
    /// Unit eigenvector oriented along the chosen branch.
    pub direction: [f64; 4],
    pub eigenvalue: f64,
}

/// Precision mode implied by the policy for a given μ.
pub fn default_precision(mu: f64) -> Precision {
    if mu >= MU_NATIVE_MIN {
        Precision::Native
    } else {
        Precision::Compensated
    }
}

pub fn check_precision(mu: f64, precision: Precision) -> Result<()> {
    if mu < MU_FLOOR {
        return Err(Error::NumericalFloor(format!(
            "μ = {mu:e} is below the supported floor {MU_FLOOR:e}"
        )));
    }
    if mu < MU_NATIVE_MIN && precision == Precision::Native {
        return Err(Error::NumericalFloor(format!(
            "μ = {mu:e} < {MU_NATIVE_MIN:e} needs compensated precision"
        )));
    }
    Ok(())
}

pub fn seed_branch(m: &MuParam, kind: ManifoldKind, sign: BranchSign, eps: f64, precision: Precision) -> Result<ManifoldBranch> {
    if !(1e-9..=1e-5).contains(&eps) {
        return Err(Error::Invalid(format!("seed offset ε = {eps:e} must lie in [1e-9, 1e-5]")));
    }
    let l3 = l3_state(m)?;
    let lin = linearize(&l3, m)?;
    let (vu, vs) = lin.hyperbolic_vectors();
    let (v, lam) = match kind {
        ManifoldKind::Unstable => (vu, lin.eigenvalues[0].re),
        ManifoldKind::Stable => (vs, lin.eigenvalues[1].re),
    };
    if v[0].hypot(v[1]) < 1e-8 {
        return Err(Error::Spectrum("hyperbolic eigenvector has no configuration component".into()));
    }
    let orient = if v[1] >= 0.0 { 1.0 } else { -1.0 } * sign.value();
    let direction = v.map(|c| orient * c);
    let base = l3.to_array();
    let seed = std::array::from_fn(|i| base[i] + eps * direction[i]);
    Ok(ManifoldBranch {
        mu: *m,
        kind,
        sign,
        seed_offset: eps,
        seed_state: CartesianState::from_array(seed),
        precision,
        l3,
        direction,
        eigenvalue: lam,
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum Section {
    /// Σ(θ*) = {θ = θ*, r > 1}.
    Theta(f64),
    /// S(λ*) = {λ = λ*, Λ > 0} in scaled variables.
    Lambda(f64),
}

impl Section {
    pub fn validate(&self) -> Result<()> {
        let l0 = lambda0();
        match *self {
            Section::Theta(t) if !(t > 0.0 && t < l0) => {
                Err(Error::Invalid(format!("θ* = {t} must lie in (0, {l0:.6}) ")))
            }
            Section::Lambda(l) if !(l > 0.0 && l < l0) => {
                Err(Error::Invalid(format!("λ* = {l} must lie in (0, {l0:.6})")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackOptions {
    pub integrator: IntegratorConfig,
    /// Integration horizon in units of 1/√μ.
    pub horizon_scaled: f64,
    pub min_primary_distance: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::with_tol(1e-12, 1e-15),
            horizon_scaled: 200.0,
            min_primary_distance: 1e-4,
        }
    }
}

impl TrackOptions {
    pub fn with_tol(rel_tol: f64) -> Self {
        Self {
            integrator: IntegratorConfig::with_tol(rel_tol, rel_tol * 1e-3),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionCrossing {
    pub section: Section,
    pub crossing_index: usize,
    pub time_of_flight: f64,
    pub cartesian: CartesianState,
    pub state_polar: Option<PolarState>,
    pub state_scaled: Option<ScaledState>,
    pub steps: usize,
}

fn close_approach(y: &[f64], mu: f64, min: f64) -> Result<()> {
    let r1 = (y[0] - mu).hypot(y[1]);
    let r2 = (y[0] - mu + 1.0).hypot(y[1]);
    if r1 < min || r2 < min {
        return Err(Error::Domain(format!(
            "trajectory came within {:.3e} of a primary",
            r1.min(r2)
        )));
    }
    Ok(())
}

fn run_track<T: Real>(b: &ManifoldBranch, section: Section, opts: &TrackOptions) -> Result<(f64, [f64; 4], usize)> {
    let mu64 = b.mu.mu;
    let mu = T::from_f64(mu64);
    let base = b.l3.to_array();
    let eps = T::from_f64(b.seed_offset);
    let y0: [T; 4] = std::array::from_fn(|i| T::from_f64(base[i]) + eps * T::from_f64(b.direction[i]));
    let dir = match b.kind {
        ManifoldKind::Unstable => 1.0,
        ManifoldKind::Stable => -1.0,
    };
    let horizon = T::from_f64(dir * opts.horizon_scaled / mu64.sqrt());
    let min_d = opts.min_primary_distance;
    let observe = |_t: T, y: &[T; 4]| close_approach(&y.map(|v| v.to_f64()), mu64, min_d);
    let rhs = |_t: T, y: &[T; 4]| field(y, mu);
    let hit = match section {
        Section::Theta(th) => {
            let (s, c) = th.sin_cos();
            let (ts, tc) = (T::from_f64(s), T::from_f64(c));
            let ev = EventSpec::new(move |_t: T, y: &[T; 4]| y[0] * ts - y[1] * tc, Direction::Increasing)
                .accept(move |y| y[0] * c + y[1] * s > 0.0 && y[0].hypot(y[1]) > 1.0);
            integrate_to_event_observed(rhs, T::zero(), y0, horizon, &ev, &opts.integrator, observe)?
        }
        Section::Lambda(ls) => {
            let m = b.mu;
            let ev = EventSpec::new(
                move |_t: T, y: &[T; 4]| {
                    let s = CartesianState::from_array(y.map(|v| v.to_f64()));
                    match cart_to_scaled(&s, &m) {
                        Ok(ss) => T::from_f64(ss.lambda - ls),
                        Err(_) => T::from_f64(f64::NAN),
                    }
                },
                Direction::Decreasing,
            )
            .accept(move |y| {
                cart_to_scaled(&CartesianState::from_array([y[0], y[1], y[2], y[3]]), &m)
                    .map(|ss| ss.big_lambda > 0.0)
                    .unwrap_or(false)
            });
            integrate_to_event_observed(rhs, T::zero(), y0, horizon, &ev, &opts.integrator, observe)?
        }
    };
    Ok((hit.t.to_f64(), hit.y.map(|v| v.to_f64()), hit.stats.accepted))
}

/// Integrates the branch (forward if unstable, backward if stable) to its
/// first admissible crossing with `section`.
pub fn track_to_section(b: &ManifoldBranch, section: Section, opts: &TrackOptions) -> Result<SectionCrossing> {
    section.validate()?;
    opts.integrator.validate()?;
    let (t, y, steps) = match b.precision {
        Precision::Native => run_track::<f64>(b, section, opts)?,
        Precision::Compensated => run_track::<DoubleDouble>(b, section, opts)?,
    };
    let cartesian = CartesianState::from_array(y);
    let (state_polar, state_scaled) = match section {
        Section::Theta(_) => (Some(cart_to_polar(&cartesian)?), None),
        Section::Lambda(_) => (None, Some(cart_to_scaled(&cartesian, &b.mu)?)),
    };
    Ok(SectionCrossing {
        section,
        crossing_index: 1,
        time_of_flight: t.abs(),
        cartesian,
        state_polar,
        state_scaled,
        steps,
    })
}

/// Distance between Φ(W^{u,+} ∩ Σ(θ*)) and the tracked W^{s,−} ∩ Σ(−θ*).
/// The involution reflects q2, so the mirrored section is crossed in the same
/// direction by the reversed flow.
pub fn reversibility_defect(m: &MuParam, theta_star: f64, cfg: &SplittingConfig) -> Result<f64> {
    Section::Theta(theta_star).validate()?;
    let precision = cfg.precision_for(m.mu);
    check_precision(m.mu, precision)?;
    let bu = seed_branch(m, ManifoldKind::Unstable, BranchSign::Plus, cfg.seed_offset, precision)?;
    let bs = seed_branch(m, ManifoldKind::Stable, BranchSign::Minus, cfg.seed_offset, precision)?;
    let run = |b: &ManifoldBranch, th: f64| match precision {
        Precision::Native => run_track::<f64>(b, Section::Theta(th), &cfg.track),
        Precision::Compensated => run_track::<DoubleDouble>(b, Section::Theta(th), &cfg.track),
    };
    let (_, yu, _) = run(&bu, theta_star)?;
    let (_, ys, _) = run(&bs, -theta_star)?;
    let mirrored = involution_phi(&CartesianState::from_array(yu));
    Ok(mirrored.dist(&CartesianState::from_array(ys)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingConfig {
    pub seed_offset: f64,
    pub precision: Option<Precision>,
    pub track: TrackOptions,
    pub a_value: f64,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        Self {
            seed_offset: 1e-7,
            precision: None,
            track: TrackOptions::default(),
            a_value: A_REFERENCE,
        }
    }
}

impl SplittingConfig {
    pub fn precision_for(&self, mu: f64) -> Precision {
        self.precision.unwrap_or_else(|| default_precision(mu))
    }

    /// Replaces the reference A by the quadrature value.
    pub fn with_quadrature_a(mut self) -> Result<Self> {
        self.a_value = constant_a_x_integral(1e-13)?.value;
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingReport {
    pub mu: f64,
    pub theta_star: f64,
    pub d: f64,
    pub delta_r: f64,
    #[serde(rename = "delta_R")]
    pub delta_big_r: f64,
    #[serde(rename = "delta_G")]
    pub delta_g: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub tof_u: f64,
    pub tof_s: f64,
    pub energy_gap: f64,
    pub crossing_u: PolarState,
    pub crossing_s: PolarState,
    pub precision: Precision,
    pub seed_offset: f64,
    pub rel_tol: f64,
    pub a_value: f64,
}

/// d·μ^{−1/3}·e^{A/√μ}.
pub fn normalized_constant(d: f64, mu: f64, a: f64) -> f64 {
    d * mu.powf(-1.0 / 3.0) * (a / mu.sqrt()).exp()
}

fn both_branches(m: &MuParam, cfg: &SplittingConfig) -> Result<(ManifoldBranch, ManifoldBranch, Precision)> {
    let precision = cfg.precision_for(m.mu);
    check_precision(m.mu, precision)?;
    let bu = seed_branch(m, ManifoldKind::Unstable, BranchSign::Plus, cfg.seed_offset, precision)?;
    let bs = seed_branch(m, ManifoldKind::Stable, BranchSign::Plus, cfg.seed_offset, precision)?;
    Ok((bu, bs, precision))
}

/// Distance between the first crossings of W^{u,+} and W^{s,+} with Σ(θ*).
pub fn splitting_distance(m: &MuParam, theta_star: f64, cfg: &SplittingConfig) -> Result<SplittingReport> {
    let (bu, bs, precision) = both_branches(m, cfg)?;
    let sec = Section::Theta(theta_star);
    let cu = track_to_section(&bu, sec, &cfg.track)?;
    let cs = track_to_section(&bs, sec, &cfg.track)?;
    let (pu, ps) = (cu.state_polar.unwrap(), cs.state_polar.unwrap());
    let (dr, dbr, dg) = (pu.r - ps.r, pu.big_r - ps.big_r, pu.g - ps.g);
    let d = (dr * dr + dbr * dbr + dg * dg).sqrt();
    let floor = 100.0 * cfg.track.integrator.rel_tol.max(precision.unit_roundoff());
    if d < floor {
        return Err(Error::NumericalFloor(format!(
            "d = {d:e} is below 100× the error floor {floor:e}; use compensated precision or a tighter tolerance"
        )));
    }
    let c = normalized_constant(d, m.mu, cfg.a_value);
    if !c.is_finite() {
        return Err(Error::NumericalFloor(format!("normalized constant overflowed at μ = {}", m.mu)));
    }
    let energy_gap = hamiltonian_h(&cu.cartesian, m)? - hamiltonian_h(&cs.cartesian, m)?;
    Ok(SplittingReport {
        mu: m.mu,
        theta_star,
        d,
        delta_r: dr,
        delta_big_r: dbr,
        delta_g: dg,
        c,
        tof_u: cu.time_of_flight,
        tof_s: cs.time_of_flight,
        energy_gap,
        crossing_u: pu,
        crossing_s: ps,
        precision,
        seed_offset: cfg.seed_offset,
        rel_tol: cfg.track.integrator.rel_tol,
        a_value: cfg.a_value,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledSplittingReport {
    pub mu: f64,
    pub delta: f64,
    pub lambda_star: f64,
    pub dx: Complex64,
    pub dy: Complex64,
    #[serde(rename = "dLambda")]
    pub d_big_lambda: f64,
    pub abs_dx: f64,
    pub abs_dy: f64,
    #[serde(rename = "abs_dLambda")]
    pub abs_d_big_lambda: f64,
    /// |Δx|·δ^{−1/3}·e^{A/δ²}/2^{1/6}, which tends to |Θ|.
    pub theta_estimate: f64,
    pub crossing_u: ScaledState,
    pub crossing_s: ScaledState,
    pub tof_u: f64,
    pub tof_s: f64,
    pub precision: Precision,
}

/// Splitting on the scaled section S(λ*).
pub fn scaled_section_splitting(m: &MuParam, lambda_star: f64, cfg: &SplittingConfig) -> Result<ScaledSplittingReport> {
    let (bu, bs, precision) = both_branches(m, cfg)?;
    let sec = Section::Lambda(lambda_star);
    let cu = track_to_section(&bu, sec, &cfg.track)?;
    let cs = track_to_section(&bs, sec, &cfg.track)?;
    let (su, ss) = (cu.state_scaled.unwrap(), cs.state_scaled.unwrap());
    let dx = su.x - ss.x;
    let dy = su.y - ss.y;
    let dl = su.big_lambda - ss.big_lambda;
    let delta = m.delta;
    Ok(ScaledSplittingReport {
        mu: m.mu,
        delta,
        lambda_star,
        dx,
        dy,
        d_big_lambda: dl,
        abs_dx: dx.norm(),
        abs_dy: dy.norm(),
        abs_d_big_lambda: dl.abs(),
        theta_estimate: dx.norm() * delta.powf(-1.0 / 3.0) * (cfg.a_value / (delta * delta)).exp() / 2f64.powf(1.0 / 6.0),
        crossing_u: su,
        crossing_s: ss,
        tof_u: cu.time_of_flight,
        tof_s: cs.time_of_flight,
        precision,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub mu: f64,
    pub residual_rate: f64,
    pub residual_prefactor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticFit {
    #[serde(rename = "A_hat")]
    pub a_hat: f64,
    pub ln_c_hat: f64,
    pub c0_hat: f64,
    pub c1_hat: f64,
    pub a_reference: f64,
    pub rate_rms: f64,
    pub prefactor_rms: f64,
    pub n: usize,
    pub residuals: Vec<FitPoint>,
}

/// Least squares for y ≈ p0 + p1·x; returns (p0, p1, residuals).
fn line_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let spread = x.iter().map(|v| (v - mx).abs()).fold(0.0, f64::max);
    if !(sxx > 0.0) || spread < 1e-12 * mx.abs().max(1.0) {
        return Err(Error::Invalid("ill-conditioned fit: abscissae do not vary".into()));
    }
    let p1 = sxy / sxx;
    let p0 = my - p1 * mx;
    let res = x.iter().zip(y).map(|(a, b)| b - (p0 + p1 * a)).collect();
    Ok((p0, p1, res))
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|r| r * r).sum::<f64>() / v.len() as f64).sqrt()
}

/// Fits ln(d·μ^{−1/3}) = ln c − A/√μ and C(μ) = c0 + c1/|ln μ|.
pub fn fit_asymptotics(reports: &[SplittingReport]) -> Result<AsymptoticFit> {
    if reports.len() < 5 {
        return Err(Error::Invalid(format!("fit needs at least 5 reports, got {}", reports.len())));
    }
    let (lo, hi) = reports
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r.mu), b.max(r.mu)));
    if hi / lo < 10.0 * (1.0 - 1e-9) {
        return Err(Error::Invalid(format!(
            "ill-conditioned fit: μ spans only [{lo:e}, {hi:e}], less than a decade"
        )));
    }
    let a_ref = reports[0].a_value;
    let x1: Vec<f64> = reports.iter().map(|r| -1.0 / r.mu.sqrt()).collect();
    let y1: Vec<f64> = reports.iter().map(|r| (r.d * r.mu.powf(-1.0 / 3.0)).ln()).collect();
    let (ln_c, a_hat, res1) = line_fit(&x1, &y1)?;
    let x2: Vec<f64> = reports.iter().map(|r| 1.0 / r.mu.ln().abs()).collect();
    let y2: Vec<f64> = reports.iter().map(|r| r.c).collect();
    let (c0, c1, res2) = line_fit(&x2, &y2)?;
    Ok(AsymptoticFit {
        a_hat,
        ln_c_hat: ln_c,
        c0_hat: c0,
        c1_hat: c1,
        a_reference: a_ref,
        rate_rms: rms(&res1),
        prefactor_rms: rms(&res2),
        n: reports.len(),
        residuals: reports
            .iter()
            .zip(res1.iter().zip(&res2))
            .map(|(r, (a, b))| FitPoint {
                mu: r.mu,
                residual_rate: *a,
                residual_prefactor: *b,
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceResidual {
    pub u_min: f64,
    pub u_max: f64,
    pub samples: usize,
    pub max_residual: f64,
    pub max_abs_w: f64,
}

fn sep_state(y: &[f64; 4], m: &MuParam, shift: &EquilibriumShift, handle: &SeparatrixHandle) -> Result<SeparatrixCoordState> {
    let ss = shift.shift(&cart_to_scaled(&CartesianState::from_array(*y), m)?);
    let branch = if ss.big_lambda >= 0.0 { Branch::Stable } else { Branch::Unstable };
    to_separatrix_coords(&ss, handle, branch, 0.0)
}

/// Partials (H_u, H_w, H_x, H_y) of the Hamiltonian in separatrix coordinates
/// on the real slice y = conj(x), by central differences.
fn outer_partials(sc: &SeparatrixCoordState, m: &MuParam, shift: &EquilibriumShift, handle: &SeparatrixHandle) -> Result<[Complex64; 4]> {
    let h_at = |s: &SeparatrixCoordState| -> Result<f64> {
        let ss = shift.unshift(&from_separatrix_coords(s, handle, m.delta)?);
        scaled_hamiltonian(&ss, m)
    };
    let hd = 1e-4;
    let d = |f: &dyn Fn(f64) -> SeparatrixCoordState| -> Result<f64> {
        let p1 = h_at(&f(hd))?;
        let m1 = h_at(&f(-hd))?;
        let p2 = h_at(&f(2.0 * hd))?;
        let m2 = h_at(&f(-2.0 * hd))?;
        Ok((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * hd))
    };
    let hu = d(&|e| SeparatrixCoordState { u: sc.u + e, ..*sc })?;
    let hw = d(&|e| SeparatrixCoordState { w: sc.w + e, ..*sc })?;
    let i = Complex64::i();
    let ha = d(&|e| SeparatrixCoordState {
        x: sc.x + e,
        y: sc.y + e,
        ..*sc
    })?;
    let hb = d(&|e| SeparatrixCoordState {
        x: sc.x + i * e,
        y: sc.y - i * e,
        ..*sc
    })?;
    let hx = (ha - i * hb) / 2.0;
    let hy = (ha + i * hb) / 2.0;
    Ok([Complex64::new(hu, 0.0), Complex64::new(hw, 0.0), hx, hy])
}

/// Residual of the invariance equation for the graph z(u) = (w, x, y)(u) of
/// the unstable branch on the return leg u ∈ [u_min, u_max].
pub fn invariance_residual(
    b: &ManifoldBranch,
    u_min: f64,
    u_max: f64,
    samples: usize,
    opts: &TrackOptions,
) -> Result<InvarianceResidual> {
    if b.kind != ManifoldKind::Unstable {
        return Err(Error::Invalid("invariance residual is computed on the unstable branch".into()));
    }
    // the graph is sampled in native precision whatever the branch mode
    let b = &ManifoldBranch {
        precision: Precision::Native,
        ..*b
    };
    if !(u_min > 0.0 && u_max > u_min) || samples < 8 {
        return Err(Error::Invalid("window needs 0 < u_min < u_max and at least 8 samples".into()));
    }
    let m = b.mu;
    let handle = SeparatrixHandle::standard()?;
    let shift = EquilibriumShift::new(&m)?;
    let t_at = |u: f64| -> Result<f64> {
        Ok(track_to_section(b, Section::Lambda(handle.lambda_h(u)), opts)?.time_of_flight)
    };
    let (ta, tb) = (t_at(u_min)?, t_at(u_max)?);
    let dt = (tb - ta) / (samples - 1) as f64;
    let times: Vec<f64> = (-2..samples as i64 + 2).map(|k| ta + k as f64 * dt).collect();
    let rhs = |_t: f64, y: &[f64; 4]| field(y, m.mu);
    let ys = integrate_sampled(rhs, 0.0, b.seed_state.to_array(), &times, &opts.integrator)?;
    let sc: Vec<SeparatrixCoordState> = ys.iter().map(|y| sep_state(y, &m, &shift, &handle)).collect::<Result<_>>()?;
    let i = Complex64::i();
    let mut worst = 0.0f64;
    let mut max_w = 0.0f64;
    for k in 2..sc.len() - 2 {
        let fd = |g: &dyn Fn(&SeparatrixCoordState) -> Complex64| {
            (8.0 * (g(&sc[k + 1]) - g(&sc[k - 1])) - (g(&sc[k + 2]) - g(&sc[k - 2]))) / 12.0
        };
        let du = fd(&|s| Complex64::new(s.u, 0.0));
        let zp = [
            fd(&|s| Complex64::new(s.w, 0.0)) / du,
            fd(&|s| s.x) / du,
            fd(&|s| s.y) / du,
        ];
        let [hu, hw, hx, hy] = outer_partials(&sc[k], &m, &shift, &handle)?;
        // η = √(L−G)e^{ig} turns clockwise in the rotating frame: ẋ = −i∂_y H
        let model = [-hu / hw, -i * hy / hw, i * hx / hw];
        let r = (0..3).map(|j| (zp[j] - model[j]).norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(r);
        max_w = max_w.max(sc[k].w.abs());
    }
    Ok(InvarianceResidual {
        u_min,
        u_max,
        samples,
        max_residual: worst,
        max_abs_w: max_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_reflections() {
        let m = MuParam::new(1e-3).unwrap();
        let p = seed_branch(&m, ManifoldKind::Unstable, BranchSign::Plus, 1e-7, Precision::Native).unwrap();
        let q = seed_branch(&m, ManifoldKind::Unstable, BranchSign::Minus, 1e-7, Precision::Native).unwrap();
        let l3 = p.l3.to_array();
        for i in 0..4 {
            let a = p.seed_state.to_array()[i] - l3[i];
            let b = q.seed_state.to_array()[i] - l3[i];
            assert!((a + b).abs() < 1e-15);
        }
        assert!(p.seed_state.q2 > l3[1]);
        assert!(p.direction[0].hypot(p.direction[1]) > 1e-3);
    }

    #[test]
    fn seed_offset_range() {
        let m = MuParam::new(1e-3).unwrap();
        assert!(seed_branch(&m, ManifoldKind::Stable, BranchSign::Plus, 1e-3, Precision::Native).is_err());
        assert!(seed_branch(&m, ManifoldKind::Stable, BranchSign::Plus, 1e-10, Precision::Native).is_err());
    }

    #[test]
    fn precision_policy() {
        assert_eq!(default_precision(1e-3), Precision::Native);
        assert_eq!(default_precision(5e-4), Precision::Compensated);
        assert!(check_precision(1e-5, Precision::Compensated).is_err());
        assert!(check_precision(1e-4, Precision::Native).is_err());
        assert!(check_precision(1e-4, Precision::Compensated).is_ok());
    }

    #[test]
    fn section_bounds() {
        assert!(Section::Theta(0.0).validate().is_err());
        assert!(Section::Theta(2.8).validate().is_err());
        assert!(Section::Lambda(1.0).validate().is_ok());
    }

    #[test]
    fn crossing_at_quarter_turn() {
        let m = MuParam::new(1e-3).unwrap();
        let b = seed_branch(&m, ManifoldKind::Unstable, BranchSign::Plus, 1e-7, Precision::Native).unwrap();
        let c = track_to_section(&b, Section::Theta(std::f64::consts::FRAC_PI_2), &TrackOptions::default()).unwrap();
        let p = c.state_polar.unwrap();
        assert!(p.r > 1.0);
        assert!((p.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn exact_model_fit_round_trip() {
        let (a, c0, c1) = (0.177744, 2.59, 1.3);
        let reports: Vec<SplittingReport> = (0..8)
            .map(|k| {
                let mu = 1e-3 * 20f64.powf(k as f64 / 7.0);
                let c = c0 + c1 / mu.ln().abs();
                let d = c * mu.powf(1.0 / 3.0) * (-a / mu.sqrt()).exp();
                synthetic(mu, d, a)
            })
            .collect();
        let f = fit_asymptotics(&reports).unwrap();
        assert!((f.c0_hat - c0).abs() < 1e-10 && (f.c1_hat - c1).abs() < 1e-10, "{f:?}");

        let pure: Vec<SplittingReport> = (0..6)
            .map(|k| {
                let mu = 1e-4 * 10f64.powf(k as f64 / 4.0);
                synthetic(mu, 2.59 * mu.powf(1.0 / 3.0) * (-a / mu.sqrt()).exp(), a)
            })
            .collect();
        let f = fit_asymptotics(&pure).unwrap();
        assert!((f.a_hat - a).abs() < 1e-10 && (f.ln_c_hat - 2.59f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn fit_rejects_narrow_span() {
        let r: Vec<SplittingReport> = (0..6).map(|k| synthetic(1e-3 * (1.0 + 0.1 * k as f64), 1e-3, 0.177744)).collect();
        assert!(fit_asymptotics(&r).is_err());
        assert!(fit_asymptotics(&r[..3]).is_err());
    }

    pub(crate) fn synthetic(mu: f64, d: f64, a: f64) -> SplittingReport {
        let p = PolarState::new(1.0, 0.0, 0.0, 1.0);
        SplittingReport {
            mu,
            theta_star: std::f64::consts::FRAC_PI_2,
            d,
            delta_r: d,
            delta_big_r: 0.0,
            delta_g: 0.0,
            c: normalized_constant(d, mu, a),
            tof_u: 0.0,
            tof_s: 0.0,
            energy_gap: 0.0,
            crossing_u: p,
            crossing_s: p,
            precision: Precision::Native,
            seed_offset: 1e-7,
            rel_tol: 1e-12,
            a_value: a,
        }
    }
}
