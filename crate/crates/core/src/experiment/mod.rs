//! The main program: perturb the constructed flow inside the
//! two-parameter family, follow the truncated difference in the shrinking
//! funnel until it exits, and decide the fate of the run from the exit
//! direction.

pub mod classify;
pub mod diag;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::curve::GeneratingCurve;
use crate::flow::graph::GraphStepper;
use crate::grid::{self, Grid1};
use crate::hermite::{GaussianSpace, HermiteBasis};
use crate::peanut::{quintic_cutoff, PeanutParams};

pub use classify::{classify_run, Class, ClassificationReport, NeckFunnelTrace};
pub use diag::{blowup_ratio, inner_outer_check, BlowupSeries, InnerOuterReport};

/// Perturbation parameters: u(·, τ0) = ū(·, τ0) + ε·η₀(y/ℓ0)·(Ω0 H0 + Ω2 H2).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub epsilon: f64,
    pub omega: (f64, f64),
    pub ell0: f64,
    /// funnel radius constant: exit when ‖W^u‖ = m1·e^{-τ}
    pub m1: f64,
}

impl PerturbConfig {
    pub fn from_angle(epsilon: f64, angle: f64, ell0: f64, k0: f64) -> Self {
        PerturbConfig {
            epsilon,
            omega: (angle.cos(), angle.sin()),
            ell0,
            m1: 24.0 * k0 + 1.0,
        }
    }

    pub fn validate(&self, params: &PeanutParams) -> Result<()> {
        let (o0, o2) = self.omega;
        if ((o0 * o0 + o2 * o2) - 1.0).abs() > 1e-10 {
            return Err(Error::domain("Ω must be a unit vector"));
        }
        if !(self.epsilon > 0.0) || self.epsilon > 0.1 * (-params.tau0).exp() {
            return Err(Error::domain("ε must satisfy 0 < ε ≪ e^{-τ0}"));
        }
        if 2.0 * self.ell0 >= params.parabolic_scale(params.tau0) {
            return Err(Error::domain("2ℓ0 must sit inside L(τ0)"));
        }
        let floor = 24.0 * params.k0 + (-self.ell0 * self.ell0 / 30.0).exp();
        if self.m1 <= floor {
            return Err(Error::domain(format!(
                "m1 = {} must exceed 24·K0 + e^(-ℓ0²/30) = {floor}",
                self.m1
            )));
        }
        Ok(())
    }
}

/// Initial truncated difference ε·η₀(y/ℓ0)(Ω0 + Ω2 H2(y)).
pub fn perturbation_profile(cfg: &PerturbConfig, y: f64) -> f64 {
    cfg.epsilon * quintic_cutoff(y / cfg.ell0) * (cfg.omega.0 + cfg.omega.1 * h2(y))
}

fn h2(y: f64) -> f64 {
    y * y - 2.0
}

/// Apply the perturbation to a generating curve over its graph region.
pub fn perturb(curve: &GeneratingCurve, cfg: &PerturbConfig) -> Result<GeneratingCurve> {
    let mut out = curve.clone();
    for i in 1..out.n_nodes() - 1 {
        let bump = perturbation_profile(cfg, out.x[i]);
        let r_new = out.r[i] + bump;
        if r_new <= 0.0 {
            return Err(Error::domain(
                "perturbation drives the radius nonpositive",
            ));
        }
        out.r[i] = r_new;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FunnelSnapshot {
    pub tau: f64,
    pub wu_norm: f64,
    pub ws_norm: f64,
    /// e^τ-scaled unstable coefficients
    pub d0: f64,
    pub d2: f64,
    pub quotient: f64,
    /// (bound - ‖W^u‖)/bound
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FunnelTrace {
    pub snaps: Vec<FunnelSnapshot>,
    pub tau1: Option<f64>,
    /// unit exit direction in the (H0, H2) plane
    pub exit_direction: Option<(f64, f64)>,
    pub transversal: Option<bool>,
    /// fitted decay-floor δ in ‖W^u(τ)‖² ≥ e^{-δ(τ-τ0)}‖W^u(τ0)‖²
    pub growth_floor_delta: f64,
    pub max_quotient: f64,
}

/// Solver geometry for funnel runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FunnelOpts {
    pub window: f64,
    pub h: f64,
    pub dtau_snap: f64,
    /// give up this far beyond τ0 if no exit happened
    pub horizon: f64,
    /// keep per-snapshot difference fields for diagnostics
    pub store_fields: bool,
}

impl Default for FunnelOpts {
    fn default() -> Self {
        FunnelOpts {
            window: 32.0,
            h: 0.05,
            dtau_snap: 0.01,
            horizon: 14.0,
            store_fields: false,
        }
    }
}

/// Everything a funnel run leaves behind.
pub struct FunnelRun {
    pub trace: FunnelTrace,
    pub grid: Grid1,
    pub tau_end: f64,
    /// reference deviation and difference at the final time
    pub vbar: Vec<f64>,
    pub w: Vec<f64>,
    /// reference boundary-trace samples (τ, ū(2ℓ0, τ))
    pub boundary_trace: Vec<(f64, f64)>,
    /// perturbed boundary-trace samples (τ, u(2ℓ0, τ))
    pub perturbed_boundary_trace: Vec<(f64, f64)>,
    /// per-snapshot w fields when requested
    pub w_fields: Vec<(f64, Vec<f64>)>,
    pub vbar_fields: Vec<(f64, Vec<f64>)>,
}

/// Spectral bookkeeping on the solver grid (Simpson with the Gaussian
/// weight; the dominant modes are low-degree polynomials, which the
/// stencils and the quadrature treat essentially exactly).
pub struct ModeProjector {
    grid: Grid1,
    weight: Vec<f64>,
    hk: Vec<Vec<f64>>,
}

impl ModeProjector {
    pub fn new(grid: &Grid1, basis: &HermiteBasis, k_list: &[usize]) -> Self {
        let weight: Vec<f64> = grid.nodes().map(|y| (-y * y / 4.0).exp()).collect();
        let hk = k_list
            .iter()
            .map(|&k| grid.nodes().map(|y| basis.poly(k).eval(y)).collect())
            .collect();
        ModeProjector {
            grid: grid.clone(),
            weight,
            hk,
        }
    }

    /// coefficient of H_{k_list[j]} of `f`, and the full weighted L² norm².
    pub fn project(&self, f: &[f64], k_list: &[usize]) -> (Vec<f64>, f64) {
        let n = self.grid.n_nodes;
        let mut coeffs = Vec::with_capacity(k_list.len());
        let mut buf = vec![0.0; n];
        for (j, &k) in k_list.iter().enumerate() {
            for i in 0..n {
                buf[i] = f[i] * self.hk[j][i] * self.weight[i];
            }
            coeffs.push(grid::simpson(&buf, self.grid.h) / HermiteBasis::norm_sq(k));
        }
        for i in 0..n {
            buf[i] = f[i] * f[i] * self.weight[i];
        }
        let norm_sq = grid::simpson(&buf, self.grid.h).max(0.0);
        (coeffs, norm_sq)
    }
}

/// Run the coupled (reference, difference) system from τ0 until the
/// unstable content exits the funnel or the horizon is reached.
pub fn run_funnel(
    params: &PeanutParams,
    lambda: &[f64],
    cfg: &PerturbConfig,
    opts: &FunnelOpts,
    space: &GaussianSpace,
) -> Result<FunnelRun> {
    cfg.validate(params)?;
    let grid = Grid1::symmetric(opts.window, opts.h)?;
    let basis = &space.basis;
    let c = params.cylinder();

    let mut vbar: Vec<f64> = grid
        .nodes()
        .map(|y| {
            params
                .glued_deviation(y, lambda, basis)
                .expect("window inside the profile domain")
        })
        .collect();
    let mut w: Vec<f64> = grid.nodes().map(|y| perturbation_profile(cfg, y)).collect();

    let projector = ModeProjector::new(&grid, basis, &[0, 2]);
    let mut stepper = GraphStepper::new(params.dimension, grid.clone());
    let bc_v = {
        let p = params.clone();
        let wd = opts.window;
        move |tau: f64| (p.boundary_deviation(-wd, tau), p.boundary_deviation(wd, tau))
    };
    let bc_w = |_tau: f64| (0.0, 0.0);

    let idx_2l0 = grid.nearest(2.0 * cfg.ell0);
    let mut snaps: Vec<FunnelSnapshot> = Vec::new();
    let mut boundary_trace = Vec::new();
    let mut perturbed_boundary_trace = Vec::new();
    let mut w_fields = Vec::new();
    let mut vbar_fields = Vec::new();

    let mut tau = params.tau0;
    let tau_max = params.tau0 + opts.horizon;
    let mut tau1 = None;
    let mut exit_direction = None;
    let mut transversal = None;
    let mut max_quotient: f64 = 0.0;

    let snapshot = |tau: f64,
                    vbar: &[f64],
                    w: &[f64],
                    projector: &ModeProjector,
                    grid: &Grid1|
     -> FunnelSnapshot {
        let l = params.parabolic_scale(tau);
        let field: Vec<f64> = (0..grid.n_nodes)
            .map(|i| w[i] * quintic_cutoff(grid.y(i) / l))
            .collect();
        let (coeffs, norm_sq) = projector.project(&field, &[0, 2]);
        let wu_sq = coeffs[0] * coeffs[0] * HermiteBasis::norm_sq(0)
            + coeffs[1] * coeffs[1] * HermiteBasis::norm_sq(2);
        let wu = wu_sq.sqrt();
        let ws = (norm_sq - wu_sq).max(0.0).sqrt();
        let et = tau.exp();
        let bound = cfg.m1 * (-tau).exp();
        let _ = vbar;
        FunnelSnapshot {
            tau,
            wu_norm: wu,
            ws_norm: ws,
            d0: et * coeffs[0],
            d2: et * coeffs[1],
            quotient: if wu > 0.0 { ws / wu } else { f64::INFINITY },
            margin: (bound - wu) / bound,
        }
    };

    let mut snap = snapshot(tau, &vbar, &w, &projector, &grid);
    loop {
        snaps.push(snap);
        boundary_trace.push((tau, c + vbar[idx_2l0]));
        perturbed_boundary_trace.push((tau, c + vbar[idx_2l0] + w[idx_2l0]));
        if opts.store_fields {
            w_fields.push((tau, w.clone()));
            vbar_fields.push((tau, vbar.clone()));
        }
        if snap.quotient.is_finite() {
            max_quotient = max_quotient.max(snap.quotient);
        }

        if snap.margin <= 0.0 && snaps.len() >= 2 {
            // crossing: interpolate linearly in log(e^τ‖W^u‖)
            let prev = snaps[snaps.len() - 2];
            let f_prev = prev.tau + prev.wu_norm.max(1e-300).ln() - cfg.m1.ln();
            let f_now = tau + snap.wu_norm.max(1e-300).ln() - cfg.m1.ln();
            let s = if (f_now - f_prev).abs() > 1e-300 {
                (-f_prev / (f_now - f_prev)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            tau1 = Some(prev.tau + s * (tau - prev.tau));
            let norm = (snap.d0 * snap.d0 * HermiteBasis::norm_sq(0)
                + snap.d2 * snap.d2 * HermiteBasis::norm_sq(2))
            .sqrt();
            exit_direction = Some((
                snap.d0 * HermiteBasis::norm_sq(0).sqrt() / norm,
                snap.d2 * HermiteBasis::norm_sq(2).sqrt() / norm,
            ));
            transversal = Some(f_now > f_prev);
            break;
        }
        if tau >= tau_max {
            break;
        }

        let t_next = (tau + opts.dtau_snap).min(tau_max);
        while tau < t_next {
            let mut dt = stepper.suggest_dt(&vbar);
            // the difference field has its own slopes once it grows
            dt = dt.min(stepper.suggest_dt(&w)).min(t_next - tau);
            let taken = stepper.step_pair(&mut vbar, &mut w, tau, dt, &bc_v, &bc_w)?;
            tau += taken;
        }
        snap = snapshot(tau, &vbar, &w, &projector, &grid);
    }

    // growth floor: fit the smallest δ with
    // ‖W^u(τ)‖² ≥ e^{-δ(τ-τ0)}‖W^u(τ0)‖²
    let growth_floor_delta = {
        let w0 = snaps[0].wu_norm.max(1e-300);
        snaps
            .iter()
            .skip(1)
            .map(|s| {
                let dt = s.tau - snaps[0].tau;
                if dt <= 0.0 {
                    0.0
                } else {
                    -2.0 * (s.wu_norm.max(1e-300) / w0).ln() / dt
                }
            })
            .fold(0.0f64, f64::max)
    };

    Ok(FunnelRun {
        trace: FunnelTrace {
            snaps,
            tau1,
            exit_direction,
            transversal,
            growth_floor_delta,
            max_quotient,
        },
        grid,
        tau_end: tau,
        vbar,
        w,
        boundary_trace,
        perturbed_boundary_trace,
        w_fields,
        vbar_fields,
    })
}

/// Exit detection on a stored (τ, ‖W^u‖, d0, d2) series; used against
/// synthetic traces and by the runner above.
pub fn detect_exit(
    series: &[(f64, f64, f64, f64)],
    m1: f64,
) -> Option<(f64, (f64, f64), bool)> {
    for i in 1..series.len() {
        let (tau_a, wu_a, _, _) = series[i - 1];
        let (tau_b, wu_b, d0, d2) = series[i];
        let bound_b = m1 * (-tau_b).exp();
        if wu_b >= bound_b {
            let f_prev = tau_a + wu_a.max(1e-300).ln() - m1.ln();
            let f_now = tau_b + wu_b.max(1e-300).ln() - m1.ln();
            let s = if (f_now - f_prev).abs() > 1e-300 {
                (-f_prev / (f_now - f_prev)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let tau1 = tau_a + s * (tau_b - tau_a);
            let norm = (d0 * d0 * HermiteBasis::norm_sq(0) + d2 * d2 * HermiteBasis::norm_sq(2))
                .sqrt();
            let dir = (
                d0 * HermiteBasis::norm_sq(0).sqrt() / norm,
                d2 * HermiteBasis::norm_sq(2).sqrt() / norm,
            );
            return Some((tau1, dir, f_now > f_prev));
        }
    }
    None
}

/// Angle of an exit direction in the (H0, H2) plane.
pub fn direction_angle(dir: (f64, f64)) -> f64 {
    dir.1.atan2(dir.0)
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = a - b;
    while d > std::f64::consts::PI {
        d -= 2.0 * std::f64::consts::PI;
    }
    while d < -std::f64::consts::PI {
        d += 2.0 * std::f64::consts::PI;
    }
    d
}

#[derive(Debug, Clone, Serialize)]
pub struct OmegaSearchReport {
    pub omega_angle: f64,
    pub exit_angle: f64,
    pub target_angle: f64,
    pub runs: usize,
}

/// Find Ω realizing a prescribed exit direction: 1-D bisection on the
/// launch angle (the exit map is degree one onto the unit circle of the
/// unstable plane).
pub fn omega_search(
    params: &PeanutParams,
    lambda: &[f64],
    epsilon: f64,
    ell0: f64,
    target: (f64, f64),
    angle_tol: f64,
    opts: &FunnelOpts,
    space: &GaussianSpace,
    initial_samples: usize,
) -> Result<OmegaSearchReport> {
    let target_angle = direction_angle(target);
    let mut runs = 0;
    let mut exit_angle_at = |angle: f64| -> Result<f64> {
        let cfg = PerturbConfig::from_angle(epsilon, angle, ell0, params.k0);
        let run = run_funnel(params, lambda, &cfg, opts, space)?;
        runs += 1;
        let dir = run
            .trace
            .exit_direction
            .ok_or_else(|| Error::SearchFailed(format!("no exit at angle {angle}")))?;
        Ok(direction_angle(dir))
    };

    // initial sweep to bracket the target angle
    let n = initial_samples.max(8);
    let mut prev_angle = -std::f64::consts::PI;
    let mut prev_diff = angle_diff(exit_angle_at(prev_angle)?, target_angle);
    let mut bracket = None;
    for i in 1..=n {
        let a = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        let d = angle_diff(exit_angle_at(a)?, target_angle);
        if prev_diff == 0.0 {
            bracket = Some((prev_angle, prev_angle, prev_diff, prev_diff));
            break;
        }
        if prev_diff.signum() != d.signum() && prev_diff.abs() < 2.0 && d.abs() < 2.0 {
            bracket = Some((prev_angle, a, prev_diff, d));
            break;
        }
        prev_angle = a;
        prev_diff = d;
    }
    let (mut lo, mut hi, mut d_lo, _) = bracket.ok_or_else(|| {
        Error::SearchFailed("no sign change of the exit-angle mismatch over the sweep".into())
    })?;
    for _ in 0..60 {
        if (hi - lo).abs() < 1e-13 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let d = angle_diff(exit_angle_at(mid)?, target_angle);
        if d.abs() < angle_tol {
            return Ok(OmegaSearchReport {
                omega_angle: mid,
                exit_angle: target_angle + d,
                target_angle,
                runs,
            });
        }
        if d.signum() == d_lo.signum() {
            lo = mid;
            d_lo = d;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    let d = angle_diff(exit_angle_at(mid)?, target_angle);
    if d.abs() < angle_tol {
        Ok(OmegaSearchReport {
            omega_angle: mid,
            exit_angle: target_angle + d,
            target_angle,
            runs,
        })
    } else {
        Err(Error::SearchFailed(format!(
            "angle bisection stalled at mismatch {d}"
        )))
    }
}
