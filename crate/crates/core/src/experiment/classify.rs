//! Post-exit continuation and classification, plus the neck-funnel mode
//! tracking that pins the neutral-mode dominance at τ₂.

use serde::Serialize;

use crate::barriers::{assemble_q_minus, tip_quantities, BarrierSpec};
use crate::bowl::BowlProfile;
use crate::error::{Error, Result};
use crate::flow::graph::GraphStepper;
use crate::grid::{deriv2_alloc, Grid1};
use crate::hermite::{GaussianSpace, HermiteBasis};
use crate::peanut::{quintic_cutoff, PeanutParams};

use super::{run_funnel, FunnelOpts, FunnelRun, ModeProjector, PerturbConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Class {
    Spherical,
    Neckpinch,
    Undecided,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassificationReport {
    pub class: Class,
    pub tau1: Option<f64>,
    pub exit_direction: Option<(f64, f64)>,
    /// τ at which the deciding event was observed (convexity or pinch)
    pub tau_event: Option<f64>,
    /// worst e^τ·u_yy over the window at the convexity event
    pub convexity_margin: Option<f64>,
    /// lobe inscribed-ball radii and the survival margin
    /// r_b²/(2n) / (2·(t_pinch - t_ref)) for pinch events
    pub lobe_balls: Option<(f64, f64)>,
    pub lobe_survival_factor: Option<f64>,
    pub detail: String,
}

/// Convexity of the profile: e^τ·u_yy < 0 across the window (the
/// rotational curvature of a graph is automatically positive), together
/// with the outer certificate that the intermediate-region band
/// √(2(n-1) - a y⁴) is concave for every a in the slack band.
fn window_convexity_margin(
    grid: &Grid1,
    vbar: &[f64],
    w: &[f64],
    tau: f64,
    inset: f64,
) -> f64 {
    let u: Vec<f64> = vbar.iter().zip(w.iter()).map(|(a, b)| a + b).collect();
    let uyy = deriv2_alloc(&u, grid.h);
    let et = tau.exp();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..grid.n_nodes {
        if grid.y(i).abs() <= grid.half_width - inset {
            worst = worst.max(et * uyy[i]);
        }
    }
    worst
}

/// The superellipsoid band is strictly concave: for u² = 2(n-1) - a·y⁴,
/// u_yy = -(6 a y²)/u - 4a²y⁶/u³ < 0 for every a > 0. Checked on samples
/// over the band [k_out·(1-δ), k_out·(1+δ)] as a certificate for the
/// outer region the window does not cover.
fn outer_concavity_certificate(params: &PeanutParams, tau: f64, y_from: f64) -> f64 {
    let emgt = (-(params.m as f64) * params.gamma() * tau).exp();
    let mut worst = f64::NEG_INFINITY;
    for band in [1.0 - params.delta, 1.0, 1.0 + params.delta] {
        let a = params.k_outer() * band * emgt;
        let y_max = (2.0 * (params.dimension as f64 - 1.0) / a).powf(0.25);
        for i in 0..200 {
            let y = y_from + (0.995 * y_max - y_from) * i as f64 / 199.0;
            if y <= 0.0 || y >= y_max {
                continue;
            }
            let u_sq = 2.0 * (params.dimension as f64 - 1.0) - a * y.powi(4);
            if u_sq <= 1e-6 {
                continue;
            }
            let u = u_sq.sqrt();
            let uyy = -(6.0 * a * y * y) / u - 4.0 * a * a * y.powi(6) / (u * u * u);
            worst = worst.max(uyy);
        }
    }
    worst
}

/// Options for the post-exit continuation.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ClassifyOpts {
    /// how far past τ1 to look for convexity
    pub convexity_horizon: f64,
    /// extra τ beyond τ2 before giving up on a pinch
    pub pinch_overrun: f64,
    /// u(0) threshold declaring the pinch, as a fraction of √(2(n-1));
    /// kept well above the unphysical q < -2(n-1) regime
    pub pinch_tol: f64,
    /// look-back from the pinch for the lobe-ball reference time
    pub ball_lookback: f64,
    /// relative barrier spread used for the lobe certificate
    pub eta_bar: f64,
    pub sigma_n: f64,
    /// parabolic/intermediate boundary of the certificate barrier (2ℓ0)
    pub ell1: f64,
}

/// Decide the fate of a perturbation: run the funnel to its exit and
/// continue on the side the exit direction picks.
pub fn classify_run(
    params: &PeanutParams,
    lambda: &[f64],
    cfg: &PerturbConfig,
    opts: &FunnelOpts,
    copts: &ClassifyOpts,
    space: &GaussianSpace,
    bowl: &BowlProfile,
) -> Result<ClassificationReport> {
    let run = run_funnel(params, lambda, cfg, opts, space)?;
    let Some(tau1) = run.trace.tau1 else {
        return Ok(ClassificationReport {
            class: Class::Undecided,
            tau1: None,
            exit_direction: None,
            tau_event: None,
            convexity_margin: None,
            lobe_balls: None,
            lobe_survival_factor: None,
            detail: "no funnel exit before the horizon".into(),
        });
    };
    let dir = run.trace.exit_direction.unwrap();

    if dir.1 < 0.0 {
        classify_spherical_side(params, run, tau1, dir, opts, copts)
    } else {
        classify_neck_side(params, run, tau1, dir, copts, space, bowl)
    }
}

fn classify_spherical_side(
    params: &PeanutParams,
    run: FunnelRun,
    tau1: f64,
    dir: (f64, f64),
    opts: &FunnelOpts,
    copts: &ClassifyOpts,
) -> Result<ClassificationReport> {
    let grid = run.grid.clone();
    let mut vbar = run.vbar;
    let mut w = run.w;
    let mut tau = run.tau_end;
    let mut stepper = GraphStepper::new(params.dimension, grid.clone());
    let bc_v = {
        let p = params.clone();
        let wd = grid.half_width;
        move |tau: f64| (p.boundary_deviation(-wd, tau), p.boundary_deviation(wd, tau))
    };
    let bc_w = |_tau: f64| (0.0, 0.0);

    let inset = 2.0;
    let tau_stop = tau1 + copts.convexity_horizon;
    loop {
        let margin = window_convexity_margin(&grid, &vbar, &w, tau, inset);
        if margin < 0.0 {
            let outer = outer_concavity_certificate(params, tau, grid.half_width - inset);
            if outer < 0.0 {
                return Ok(ClassificationReport {
                    class: Class::Spherical,
                    tau1: Some(tau1),
                    exit_direction: Some(dir),
                    tau_event: Some(tau),
                    convexity_margin: Some(margin),
                    lobe_balls: None,
                    lobe_survival_factor: None,
                    detail: format!(
                        "window curvature margin {margin:.3e}, outer certificate {outer:.3e}"
                    ),
                });
            }
        }
        if tau >= tau_stop {
            return Ok(ClassificationReport {
                class: Class::Undecided,
                tau1: Some(tau1),
                exit_direction: Some(dir),
                tau_event: None,
                convexity_margin: Some(margin),
                lobe_balls: None,
                lobe_survival_factor: None,
                detail: "no convexity before the post-exit horizon".into(),
            });
        }
        let t_next = (tau + 10.0 * opts.dtau_snap).min(tau_stop);
        while tau < t_next {
            let dt = stepper
                .suggest_dt(&vbar)
                .min(stepper.suggest_dt(&w))
                .min(t_next - tau);
            let taken = stepper.step_pair(&mut vbar, &mut w, tau, dt, &bc_v, &bc_w)?;
            tau += taken;
        }
    }
}

/// Fit (ε̂, K̂) of q ≈ ε̂ H₂ - K̂ e^{-τ} H₄ from the current fields.
fn fit_exit_state(
    params: &PeanutParams,
    grid: &Grid1,
    vbar: &[f64],
    w: &[f64],
    tau: f64,
    space: &GaussianSpace,
) -> (Vec<f64>, f64, f64) {
    let c = params.cylinder();
    let q: Vec<f64> = (0..grid.n_nodes)
        .map(|i| {
            let v = vbar[i] + w[i];
            v * (2.0 * c + v)
        })
        .collect();
    let l = params.parabolic_scale(tau);
    let field: Vec<f64> = (0..grid.n_nodes)
        .map(|i| q[i] * quintic_cutoff(grid.y(i) / l))
        .collect();
    let projector = ModeProjector::new(grid, &space.basis, &[2, 4]);
    let (coeffs, _) = projector.project(&field, &[2, 4]);
    let eps_hat = coeffs[0];
    let k_hat = -coeffs[1] * tau.exp();
    (q, eps_hat, k_hat)
}

fn classify_neck_side(
    params: &PeanutParams,
    run: FunnelRun,
    tau1: f64,
    dir: (f64, f64),
    copts: &ClassifyOpts,
    space: &GaussianSpace,
    bowl: &BowlProfile,
) -> Result<ClassificationReport> {
    let grid = run.grid.clone();
    let (mut q, eps_hat, k_hat) =
        fit_exit_state(params, &grid, &run.vbar, &run.w, run.tau_end, space);
    if !(eps_hat > 0.0) {
        return Ok(ClassificationReport {
            class: Class::Undecided,
            tau1: Some(tau1),
            exit_direction: Some(dir),
            tau_event: None,
            convexity_margin: None,
            lobe_balls: None,
            lobe_survival_factor: None,
            detail: format!("exit state has no positive neutral amplitude (ε̂ = {eps_hat:.3e})"),
        });
    }

    // The unstable uniform mode grows like e^τ everywhere on the window,
    // so no closed-form law tracks the ends; extrapolation ends follow
    // the interior (outflow) instead.
    let mut stepper = GraphStepper::new(params.dimension, grid.clone());
    let nm1 = params.dimension as f64 - 1.0;
    let tau2 = 2.0 * (copts.sigma_n / eps_hat).ln();
    let tau_cap = tau2 + copts.pinch_overrun;
    let pinch_level = -2.0 * nm1 * (1.0 - copts.pinch_tol * copts.pinch_tol);
    let center = grid.center_index();
    let mut tau = run.tau_end;
    let mut history: Vec<(f64, f64)> = vec![(tau, q[center])];

    // the crossing is checked after every substep: past it the squared
    // radius goes negative and the equation stops meaning anything
    let tau_pinch = 'outer: loop {
        if tau >= tau_cap {
            break None;
        }
        let t_next = (tau + 0.05).min(tau_cap);
        while tau < t_next {
            let prev = (tau, q[center]);
            let dt = stepper.suggest_dt(&q).min(t_next - tau);
            let taken = stepper.step_q_extrap(&mut q, tau, dt)?;
            tau += taken;
            if q[center] <= pinch_level {
                let (t_a, q_a) = prev;
                let (t_b, q_b) = (tau, q[center]);
                let s = if (q_b - q_a).abs() > 1e-300 {
                    ((pinch_level - q_a) / (q_b - q_a)).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                break 'outer Some(t_a + s * (t_b - t_a));
            }
        }
        history.push((tau, q[center]));
    };

    let Some(tau_p) = tau_pinch else {
        return Ok(ClassificationReport {
            class: Class::Undecided,
            tau1: Some(tau1),
            exit_direction: Some(dir),
            tau_event: None,
            convexity_margin: None,
            lobe_balls: None,
            lobe_survival_factor: None,
            detail: format!("no pinch at the origin by τ = {tau_cap:.2}"),
        });
    };

    // the pinch sits at the origin by symmetry; confirm the minimum
    let (imin, _) = q
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| {
            if v < acc.1 {
                (i, v)
            } else {
                acc
            }
        });
    let neck_y = grid.y(imin);

    // lobe certificate from the verified lower barrier at the look-back
    // time: the surface contains the region below √(2(n-1)+Q⁻)
    let tau_ref = tau_p - copts.ball_lookback;
    let mut spec = BarrierSpec::new(
        (1.0 - copts.eta_bar) * eps_hat,
        (1.0 + copts.eta_bar) * k_hat,
        copts.ell1,
        params.dimension,
    );
    spec.sigma_n = copts.sigma_n;
    let barrier = assemble_q_minus(spec, bowl, tau1.min(tau_ref - 1.0))?;
    let (ball, _center_x) = lobe_ball_from_barrier(&barrier, tau_ref)?;
    let survival = ball * ball / (2.0 * params.dimension as f64)
        / (2.0 * ((-tau_ref).exp() - (-tau_p).exp()));

    Ok(ClassificationReport {
        class: if survival >= 1.0 && neck_y.abs() < 0.05 * grid.half_width {
            Class::Neckpinch
        } else {
            Class::Undecided
        },
        tau1: Some(tau1),
        exit_direction: Some(dir),
        tau_event: Some(tau_p),
        convexity_margin: None,
        lobe_balls: Some((ball, ball)),
        lobe_survival_factor: Some(survival),
        detail: format!(
            "pinch at y = {neck_y:.3} (τ = {tau_p:.3}); lobe ball {ball:.3e} (unrescaled), survival factor {survival:.2}"
        ),
    })
}

/// Largest unrescaled axis ball inside the lower-barrier profile of one
/// lobe at time τ (the two lobes agree by symmetry).
fn lobe_ball_from_barrier(
    barrier: &crate::barriers::QMinusBarrier,
    tau: f64,
) -> Result<(f64, f64)> {
    let spec = &barrier.spec;
    let tf = tip_quantities(tau, spec);
    let beta = barrier.beta(tau)?;
    let y_hi = tf.y0 + 0.98 * beta / tf.alpha;
    let n = 400;
    let scale = (-tau / 2.0).exp();
    // profile samples (x, U) of the lobe in unrescaled coordinates
    let mut xs = Vec::with_capacity(n + 1);
    let mut us = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let y = spec.ell1 + (y_hi - spec.ell1) * i as f64 / n as f64;
        let q = barrier.eval_cached(y, tau, beta)?;
        let u_sq = 2.0 * spec.nm1() + q;
        xs.push(y * scale);
        us.push(u_sq.max(0.0).sqrt() * scale);
    }
    let x_left = xs[0];
    let mut best = (0.0, 0.0);
    for j in (0..=n).step_by(4) {
        let c = xs[j];
        // stay inside the lobe: distance to the neck-side plane and to
        // the sampled profile
        let mut r = c - x_left;
        for i in 0..=n {
            let d = ((xs[i] - c).powi(2) + us[i].powi(2)).sqrt();
            if d < r {
                r = d;
            }
        }
        if r > best.0 {
            best = (r, c);
        }
    }
    Ok(best)
}

/// §7 neck-funnel trace: V = q·η projections along the continuation.
#[derive(Debug, Clone, Serialize)]
pub struct NeckFunnelTrace {
    /// (τ, ⟨V,H0⟩, ⟨V,H2⟩, ⟨V,H4⟩, ‖V^s‖)
    pub series: Vec<(f64, f64, f64, f64, f64)>,
    pub omega0_bar: f64,
    pub omega0_bracket: (f64, f64),
    pub theta0: f64,
    pub tau2: f64,
    pub reached_tau2: bool,
    /// fitted Λ of the L∞ monitor |q| ≤ ε Λ (1 + y⁴)
    pub lambda_fit: f64,
}

/// Track the q-continuation from a synthesized exit state
/// q(·, τ1) = ε₇(Ω̄0 H0 + Ω̄2 H2) - K̄0 e^{-τ1} H4 and fine-search Ω̄0 in
/// [-θ̄0, θ̄0] so that the H0 content stays inside |⟨V,H0⟩/‖H0‖²| ≤ 2θ0 ε₇
/// up to τ2. The bisection runs on the sign of the H0 content at its
/// funnel exit; if no interval member reaches τ2, the funnel width θ0 is
/// doubled (the width only needs to dominate the quadratic drift, whose
/// constant is fitted, not assumed).
#[allow(clippy::too_many_arguments)]
pub fn neck_funnel_track(
    params: &PeanutParams,
    eps7: f64,
    k_bar: f64,
    tau1: f64,
    sigma_n: f64,
    theta_measured: f64,
    m1: f64,
    grid: &Grid1,
    space: &GaussianSpace,
) -> Result<NeckFunnelTrace> {
    let tau2 = 2.0 * (sigma_n / eps7).ln();
    let basis = &space.basis;

    // B1·Λ² ε² sets the drift floor; fit Λ from the synthesized state
    let lambda_fit = {
        let mut worst: f64 = 0.0;
        for y in [0.0, 4.0, 8.0, 16.0, grid.half_width] {
            let q = eps7 * (y * y - 2.0) - k_bar * (-tau1).exp() * h4(y);
            worst = worst.max(q.abs() / (eps7 * (1.0 + y.powi(4))));
        }
        worst
    };
    let mut theta0 = (2.0 * theta_measured).max(4.0 * lambda_fit * lambda_fit * eps7);

    let projector = ModeProjector::new(grid, basis, &[0, 2, 4]);
    for _ in 0..8 {
        let theta0_bar =
            theta0 / (2.0 * params.cylinder() * m1 * (2.0 * crate::hermite::SQRT_PI));
        let run_one = |omega0: f64, keep: bool| -> Result<(i32, Option<NeckSeries>)> {
            let omega2 = (1.0 - omega0 * omega0).sqrt();
            let mut q: Vec<f64> = grid
                .nodes()
                .map(|y| {
                    eps7 * (omega0 + omega2 * (y * y - 2.0)) - k_bar * (-tau1).exp() * h4(y)
                })
                .collect();
            let mut stepper = GraphStepper::new(params.dimension, grid.clone());
            let wd = grid.half_width;
            let bc = move |tau: f64| {
                let v = eps7 * omega2 * (wd * wd - 2.0) - k_bar * (-tau).exp() * h4(wd);
                (v, v)
            };
            let mut tau = tau1;
            let mut series = Vec::new();
            loop {
                let l = params.parabolic_scale(tau);
                let field: Vec<f64> = (0..grid.n_nodes)
                    .map(|i| q[i] * quintic_cutoff(grid.y(i) / l))
                    .collect();
                let (coeffs, norm_sq) = projector.project(&field, &[0, 2, 4]);
                let v0 = coeffs[0] * HermiteBasis::norm_sq(0);
                let v2 = coeffs[1] * HermiteBasis::norm_sq(2);
                let v4 = coeffs[2] * HermiteBasis::norm_sq(4);
                let resolved = coeffs[0] * coeffs[0] * HermiteBasis::norm_sq(0)
                    + coeffs[1] * coeffs[1] * HermiteBasis::norm_sq(2)
                    + coeffs[2] * coeffs[2] * HermiteBasis::norm_sq(4);
                let vs = (norm_sq - resolved).max(0.0).sqrt();
                if keep {
                    series.push((tau, v0, v2, v4, vs));
                }
                // §7 funnel on the H0 content
                if v0.abs() / HermiteBasis::norm_sq(0) > 2.0 * theta0 * eps7 {
                    return Ok((if v0 > 0.0 { 1 } else { -1 }, keep.then_some(series)));
                }
                if tau >= tau2 {
                    return Ok((0, keep.then_some(series)));
                }
                let t_next = (tau + 0.05).min(tau2);
                while tau < t_next {
                    let dt = stepper.suggest_dt(&q).min(t_next - tau);
                    let taken = stepper.step_q(&mut q, tau, dt, &bc)?;
                    tau += taken;
                }
            }
        };

        // bisect on the exit sign of the H0 content
        let (mut lo, mut hi) = (-theta0_bar, theta0_bar);
        let (s_lo0, _) = run_one(lo, false)?;
        let (s_hi0, _) = run_one(hi, false)?;
        let mut found = None;
        if s_lo0 == 0 {
            found = Some(lo);
        } else if s_hi0 == 0 {
            found = Some(hi);
        } else if s_lo0 != s_hi0 {
            let mut s_lo = s_lo0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let (sgn, _) = run_one(mid, false)?;
                if sgn == 0 {
                    found = Some(mid);
                    break;
                }
                if sgn == s_lo {
                    lo = mid;
                    s_lo = sgn;
                } else {
                    hi = mid;
                }
                if (hi - lo) < 1e-14 * theta0_bar {
                    break;
                }
            }
        }
        if let Some(omega0) = found {
            let (_, series) = run_one(omega0, true)?;
            return Ok(finish_trace(
                series.unwrap(),
                omega0,
                (lo, hi),
                theta0,
                tau2,
                lambda_fit,
            ));
        }
        theta0 *= 2.0;
    }
    Err(Error::SearchFailed(
        "no Ω̄0 kept the H0 content inside the widened funnel to τ2".into(),
    ))
}

type NeckSeries = Vec<(f64, f64, f64, f64, f64)>;

fn finish_trace(
    series: NeckSeries,
    omega0: f64,
    bracket: (f64, f64),
    theta0: f64,
    tau2: f64,
    lambda_fit: f64,
) -> NeckFunnelTrace {
    let reached = series.last().map_or(false, |s| s.0 >= tau2 - 1e-9);
    NeckFunnelTrace {
        series,
        omega0_bar: omega0,
        omega0_bracket: bracket,
        theta0,
        tau2,
        reached_tau2: reached,
        lambda_fit,
    }
}

/// Trapping check (the τ ∈ [τ1, τ2] barrier sandwich): evolve the tuned
/// exit state and compare it against the η̄-spread barriers on
/// ℓ1 ≤ |y| ≤ window at every snapshot. Returns the worst signed
/// violations (positive = outside the sandwich).
#[allow(clippy::too_many_arguments)]
pub fn barrier_trapping_check(
    params: &PeanutParams,
    eps7: f64,
    k_bar: f64,
    tau1: f64,
    omega0: f64,
    eta_bar: f64,
    sigma_n: f64,
    grid: &Grid1,
    bowl: &BowlProfile,
) -> Result<TrappingReport> {
    let mut lo_spec = BarrierSpec::new(
        (1.0 - eta_bar) * eps7,
        (1.0 + eta_bar) * k_bar,
        2.0 * 4.0_f64.min(grid.half_width / 4.0),
        params.dimension,
    );
    lo_spec.sigma_n = sigma_n;
    let ell1 = lo_spec.ell1;
    let mut hi_spec = BarrierSpec::new(
        (1.0 + eta_bar) * eps7,
        (1.0 - eta_bar) * k_bar,
        ell1,
        params.dimension,
    );
    hi_spec.sigma_n = sigma_n;
    let barrier = assemble_q_minus(lo_spec, bowl, tau1)?;
    let tau2 = 2.0 * (sigma_n / eps7).ln();

    let omega2 = (1.0 - omega0 * omega0).sqrt();
    let mut q: Vec<f64> = grid
        .nodes()
        .map(|y| eps7 * (omega0 + omega2 * (y * y - 2.0)) - k_bar * (-tau1).exp() * h4(y))
        .collect();
    let mut stepper = GraphStepper::new(params.dimension, grid.clone());
    let wd = grid.half_width;
    let bc = move |tau: f64| {
        let v = eps7 * omega2 * (wd * wd - 2.0) - k_bar * (-tau).exp() * h4(wd);
        (v, v)
    };

    let mut tau = tau1;
    let mut worst_below: f64 = f64::NEG_INFINITY; // Q⁻ - q
    let mut worst_above: f64 = f64::NEG_INFINITY; // q - Q⁺
    let mut samples = 0usize;
    loop {
        let beta = barrier.beta(tau)?;
        for i in 0..grid.n_nodes {
            let y = grid.y(i);
            if y.abs() < ell1 {
                continue;
            }
            let qm = barrier.eval_cached(y, tau, beta)?;
            let qp = crate::barriers::q_plus(y, tau, &hi_spec);
            worst_below = worst_below.max(qm - q[i]);
            worst_above = worst_above.max(q[i] - qp);
            samples += 1;
        }
        if tau >= tau2 {
            break;
        }
        let t_next = (tau + 0.25).min(tau2);
        while tau < t_next {
            let dt = stepper.suggest_dt(&q).min(t_next - tau);
            let taken = stepper.step_q(&mut q, tau, dt, &bc)?;
            tau += taken;
        }
    }
    Ok(TrappingReport {
        worst_below,
        worst_above,
        samples,
        tau1,
        tau2,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrappingReport {
    /// max over samples of Q⁻ - q (positive = q dropped below the sandwich)
    pub worst_below: f64,
    /// max over samples of q - Q⁺
    pub worst_above: f64,
    pub samples: usize,
    pub tau1: f64,
    pub tau2: f64,
}

/// Certified bounds on the bulge height max_y u(y, τ2) from the barrier
/// sandwich: (lower from Q⁻ with the spread, upper from Q⁺).
pub fn height_bounds_at_tau2(
    eps7: f64,
    k_bar: f64,
    tau1: f64,
    sigma_n: f64,
    dimension: usize,
    bowl: &BowlProfile,
) -> Result<(f64, f64)> {
    let mut spec = BarrierSpec::new(eps7, k_bar, 8.0, dimension);
    spec.sigma_n = sigma_n;
    let barrier = assemble_q_minus(spec, bowl, tau1)?;
    let tau2 = barrier.spec.tau2();
    let tf = tip_quantities(tau2, &barrier.spec);
    let two_nm1 = 2.0 * (dimension as f64 - 1.0);
    let mut lower: f64 = 0.0;
    let beta2 = barrier.beta(tau2)?;
    for i in 0..=400 {
        let y = barrier.spec.ell1 + (tf.y0 - barrier.spec.ell1) * i as f64 / 400.0;
        if let Ok(qm) = barrier.eval_cached(y, tau2, beta2) {
            lower = lower.max((two_nm1 + qm).max(0.0).sqrt());
        }
    }
    // upper: max of 2(n-1) + Q⁺ over y (analytic critical point of
    // εy² - Ke^{-τ}y⁴ plus the Hermite tails, scanned numerically)
    let hi_spec = BarrierSpec::new(eps7, k_bar, 8.0, dimension);
    let mut upper: f64 = 0.0;
    for i in 0..=2000 {
        let y = 1.05 * tf.y0 * i as f64 / 2000.0;
        let qp = crate::barriers::q_plus(y, tau2, &hi_spec);
        upper = upper.max((two_nm1 + qp).max(0.0).sqrt());
    }
    Ok((lower, upper))
}

fn h4(y: f64) -> f64 {
    y.powi(4) - 12.0 * y * y + 12.0
}
