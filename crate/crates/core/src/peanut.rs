//! Construction of the initial closed hypersurface: a Hermite-perturbed
//! cylinder glued into a superellipsoid, with bowl-soliton caps at the
//! tips, plus the shooting search for the gluing coefficients that keep
//! the unstable spectral content inside its shrinking funnel.
//!
//! Two conventions to keep straight:
//!
//! * `k0` is the parabolic-region H_m coefficient: near the axis of
//!   symmetry the profile behaves like √(2(n-1)) - k0·e^{-mγτ}·H_m(y).
//! * The outer superellipsoid uses the derived coefficient
//!   `k_outer = 2√(2(n-1))·k0`, so that both regions describe the same
//!   surface: √(2(n-1) - k_outer·y^m·e^{-mγτ}) expands to the parabolic
//!   form with coefficient k_outer/(2√(2(n-1))) = k0.

use serde::{Deserialize, Serialize};

use crate::bowl::BowlProfile;
use crate::error::{Error, Result};
use crate::flow::curve::{CurveMode, GeneratingCurve};
use crate::flow::graph::GraphStepper;
use crate::flow::profile::cylinder_radius;
use crate::grid::{self, Grid1};
use crate::hermite::{GaussianSpace, HermiteBasis};

/// Quintic smoothstep cutoff: 1 for |s| ≤ 1, 0 for |s| ≥ 2, C² in between.
pub fn quintic_cutoff(s: f64) -> f64 {
    let a = s.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let t = a - 1.0;
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeanutParams {
    /// even mode order of the profile (4 for the surfaces studied here)
    pub m: usize,
    /// ambient dimension n (hypersurface in R^{n+1})
    pub dimension: usize,
    /// parabolic H_m coefficient
    pub k0: f64,
    /// parabolic cutoff scale in L(τ) = rho·e^{γτ}
    pub rho: f64,
    /// asymptotics slack
    pub delta: f64,
    /// start of the intermediate region
    pub ell_int: f64,
    /// initial rescaled time
    pub tau0: f64,
    /// tip patch exponent, strictly inside (1/m, 1/2)
    pub tip_a: f64,
    /// tip patch matching radius coefficient: patch applies for
    /// u < tip_c1·e^{-γτ0}
    pub tip_c1: f64,
}

impl PeanutParams {
    /// Defaults sized so that every scale separation in the construction
    /// holds while all funnel quantities stay far above the f64 noise
    /// floor: L(τ0) = l_factor·ℓ0 fixes τ0.
    pub fn defaults_for(ell0: f64, l_factor: f64) -> Self {
        let rho = 0.25;
        let gamma = 0.25;
        let tau0 = (l_factor * ell0 / rho).ln() / gamma;
        PeanutParams {
            m: 4,
            dimension: 3,
            k0: 1.0,
            rho,
            delta: 0.05,
            ell_int: 5.0,
            tau0,
            tip_a: 0.35,
            tip_c1: 10.0,
        }
    }

    pub fn gamma(&self) -> f64 {
        (self.m as f64 - 2.0) / (2.0 * self.m as f64)
    }

    pub fn cylinder(&self) -> f64 {
        cylinder_radius(self.dimension)
    }

    /// Outer superellipsoid coefficient 2√(2(n-1))·k0.
    pub fn k_outer(&self) -> f64 {
        2.0 * self.cylinder() * self.k0
    }

    /// L(τ) = rho·e^{γτ}.
    pub fn parabolic_scale(&self, tau: f64) -> f64 {
        self.rho * (self.gamma() * tau).exp()
    }

    /// Tip abscissa scale A = (2(n-1)/k_outer)^{1/m}·e^{γτ0}.
    pub fn big_a(&self) -> f64 {
        (2.0 * (self.dimension as f64 - 1.0) / self.k_outer()).powf(1.0 / self.m as f64)
            * (self.gamma() * self.tau0).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 4 || self.m % 2 != 0 {
            return Err(Error::domain("mode order m must be even and at least 4"));
        }
        if self.dimension < 2 {
            return Err(Error::domain("dimension must be at least 2"));
        }
        for (name, v) in [
            ("k0", self.k0),
            ("rho", self.rho),
            ("delta", self.delta),
            ("ell_int", self.ell_int),
            ("tip_c1", self.tip_c1),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be positive")));
            }
        }
        let amp = self.k0 * (-(self.m as f64) * self.gamma() * self.tau0).exp();
        if !(amp > 1e-14 && amp < 0.5) {
            return Err(Error::domain(format!(
                "k0·e^(-mγτ0) = {amp:.3e} must sit well inside (1e-14, 0.5)"
            )));
        }
        let inv_m = 1.0 / self.m as f64;
        if !(self.tip_a > inv_m && self.tip_a < 0.5) {
            return Err(Error::domain("tip exponent must lie strictly in (1/m, 1/2)"));
        }
        if self.ell_int >= 2.0 * self.parabolic_scale(self.tau0) {
            return Err(Error::domain("ell_int must sit well inside L(τ0)"));
        }
        Ok(())
    }
}

/// Outer profile √(2(n-1) - k_out·y^m·e^{-mγτ0}) at the scale set by
/// `emgt = e^{-mγτ0}`. `None` when the argument is negative (past the
/// tip; the caller switches to the tip patch).
pub fn superellipsoid(y: f64, k_out: f64, m: usize, emgt: f64, dimension: usize) -> Option<f64> {
    let arg = 2.0 * (dimension as f64 - 1.0) - k_out * y.abs().powi(m as i32) * emgt;
    if arg < 0.0 {
        None
    } else {
        Some(arg.sqrt())
    }
}

/// Deviation form of the superellipsoid, exact near the cylinder:
/// U_out - √(2(n-1)) = -k_out·y^m·e^{-mγτ}/(U_out + √(2(n-1))).
pub fn superellipsoid_deviation(
    y: f64,
    k_out: f64,
    m: usize,
    emgt: f64,
    dimension: usize,
) -> Option<f64> {
    let c = cylinder_radius(dimension);
    let num = k_out * y.abs().powi(m as i32) * emgt;
    superellipsoid(y, k_out, m, emgt, dimension).map(|u| -num / (u + c))
}

/// Perturbed-cylinder family
/// U_λ = √(2(n-1)) + Σ λ_{2j} H_{2j}(y) - (k_out/(2√(2(n-1))))·e^{-mγτ0}·H_m(y).
pub fn u_lambda_deviation(
    y: f64,
    lambda: &[f64],
    k_out: f64,
    m: usize,
    emgt: f64,
    dimension: usize,
    basis: &HermiteBasis,
) -> f64 {
    let c = cylinder_radius(dimension);
    let k1 = k_out / (2.0 * c);
    let mut v = -k1 * emgt * basis.poly(m).eval(y);
    for (j, &l) in lambda.iter().enumerate() {
        v += l * basis.poly(2 * j).eval(y);
    }
    v
}

impl PeanutParams {
    fn emgt(&self) -> f64 {
        (-(self.m as f64) * self.gamma() * self.tau0).exp()
    }

    /// The glued initial deviation
    /// ζ(y/L(τ0))·(U_λ - c) + (1 - ζ)·(U_out - c); defined while the
    /// superellipsoid exists at y (the tip patch covers the rest).
    pub fn glued_deviation(&self, y: f64, lambda: &[f64], basis: &HermiteBasis) -> Option<f64> {
        let z = quintic_cutoff(y / self.parabolic_scale(self.tau0));
        let ul = u_lambda_deviation(
            y,
            lambda,
            self.k_outer(),
            self.m,
            self.emgt(),
            self.dimension,
            basis,
        );
        if z >= 1.0 {
            return Some(ul);
        }
        let uo = superellipsoid_deviation(y, self.k_outer(), self.m, self.emgt(), self.dimension)?;
        Some(z * ul + (1.0 - z) * uo)
    }

    /// Dirichlet boundary law for graph solvers: the intermediate-region
    /// deviation -k_out·y^m·e^{-mγτ}/(U_out + c), clamped to keep the
    /// radius positive.
    pub fn boundary_deviation(&self, y: f64, tau: f64) -> f64 {
        let emgt = (-(self.m as f64) * self.gamma() * tau).exp();
        superellipsoid_deviation(y, self.k_outer(), self.m, emgt, self.dimension)
            .unwrap_or(0.05 - self.cylinder())
    }

    /// Superellipsoid in graph-over-u form: y = A·Y(u),
    /// Y(u) = (1 - u²/(2(n-1)))^{1/m}.
    pub fn y_of_u_outer(&self, u: f64) -> f64 {
        let nm2 = 2.0 * (self.dimension as f64 - 1.0);
        self.big_a() * (1.0 - u * u / nm2).max(0.0).powf(1.0 / self.m as f64)
    }

    fn y_of_u_outer_deriv(&self, u: f64) -> f64 {
        let nm2 = 2.0 * (self.dimension as f64 - 1.0);
        let mf = self.m as f64;
        let y_pow = (1.0 - u * u / nm2).max(1e-300);
        self.big_a() * y_pow.powf(1.0 / mf - 1.0) * (-2.0 * u / (nm2 * mf))
    }

    /// Tip patch y_{aA}(u) = A - B(aAu)/(aA).
    pub fn y_of_u_tip(&self, u: f64, bowl: &BowlProfile) -> f64 {
        let aa = self.tip_a * self.big_a();
        self.big_a() - bowl.b(aa * u) / aa
    }

    /// Largest y on which the glued profile is graph-over-y with slope
    /// below 1 (the graph-over-u form takes over beyond).
    pub fn graph_region_end(&self, lambda: &[f64], basis: &HermiteBasis) -> f64 {
        let dy = self.big_a() / 4096.0;
        let mut y = 0.0;
        let mut prev = 0.0;
        loop {
            y += dy;
            let (Some(v), Some(vp)) = (
                self.glued_deviation(y, lambda, basis),
                self.glued_deviation(y + dy, lambda, basis),
            ) else {
                break;
            };
            if ((vp - v) / dy).abs() > 1.0 {
                break;
            }
            prev = y;
        }
        prev
    }

    fn y_of_u_tip_deriv(&self, u: f64, bowl: &BowlProfile) -> f64 {
        let aa = self.tip_a * self.big_a();
        -bowl.b_prime(aa * u)
    }
}

/// Geometry of the assembled tip patch.
#[derive(Debug, Clone, Serialize)]
pub struct TipPatch {
    /// u below which the bowl patch replaces the superellipsoid
    pub u_cut: f64,
    /// axial shift making the patch continuous at u_cut
    pub b_shift: f64,
    /// outer and patch slopes at the corner (outer ≥ patch is required
    /// for the subsolution property to survive the corner)
    pub corner_slope_outer: f64,
    pub corner_slope_patch: f64,
}

/// Build the closed reflection-symmetric generating curve at τ0.
pub fn build_initial_curve(
    params: &PeanutParams,
    lambda: &[f64],
    bowl: &BowlProfile,
    n_nodes: usize,
    basis: &HermiteBasis,
) -> Result<(GeneratingCurve, TipPatch)> {
    params.validate()?;
    let c = params.cylinder();
    let u_cut = params.tip_c1 * (-params.gamma() * params.tau0).exp();
    if u_cut >= 0.5 * c {
        return Err(Error::rejected(format!(
            "tip patch cut u = {u_cut:.3} reaches too far up the profile"
        )));
    }

    // continuity shift and corner condition at u_cut
    let b_shift = params.y_of_u_outer(u_cut) - params.y_of_u_tip(u_cut, bowl);
    let slope_outer = params.y_of_u_outer_deriv(u_cut);
    let slope_patch = params.y_of_u_tip_deriv(u_cut, bowl);
    let patch = TipPatch {
        u_cut,
        b_shift,
        corner_slope_outer: slope_outer,
        corner_slope_patch: slope_patch,
    };
    if slope_outer < slope_patch {
        return Err(Error::rejected(format!(
            "corner condition violated: outer slope {slope_outer:.4e} < patch slope {slope_patch:.4e}"
        )));
    }

    // Region A: graph over y out to where the slope passes 1.
    // Region B: graph over u from there down to the axis.
    let glue = |y: f64| params.glued_deviation(y, lambda, basis);
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let y_slope1 = params.graph_region_end(lambda, basis);
    let n_dense = 4096usize;
    for i in 0..n_dense {
        let y = y_slope1 * i as f64 / n_dense as f64;
        let v = glue(y).ok_or_else(|| Error::rejected("glued profile ended before slope 1"))?;
        pts.push((y, c + v));
    }
    // region B: u descends from u(y_slope1) to 0
    let u_top = c + glue(y_slope1).unwrap();
    let n_dense_b = 4096usize;
    for i in 0..=n_dense_b {
        let u = u_top * (1.0 - i as f64 / n_dense_b as f64);
        let y = if u >= u_cut {
            params.y_of_u_outer(u)
        } else {
            params.y_of_u_tip(u, bowl) + b_shift
        };
        pts.push((y, u));
    }

    // assemble right half then mirror
    let mut x = Vec::with_capacity(2 * pts.len());
    let mut r = Vec::with_capacity(2 * pts.len());
    for &(y, u) in pts.iter().rev() {
        x.push(-y);
        r.push(u.max(0.0));
    }
    for &(y, u) in pts.iter().skip(1) {
        x.push(y);
        r.push(u.max(0.0));
    }
    r[0] = 0.0;
    let last = r.len() - 1;
    r[last] = 0.0;

    let mut curve = GeneratingCurve {
        x,
        r,
        time: params.tau0,
        dimension: params.dimension,
        mode: CurveMode::Rescaled,
        enforce_symmetry: true,
    };
    curve.resample(n_nodes);
    curve.validate()?;
    Ok((curve, patch))
}

/// Margins of the two monotonicity functionals on the initial surface.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    /// min over [ell_int, 6L(τ0)] of 𝓖[ū] (graph-over-y form)
    pub min_g_inner: f64,
    pub argmin_g: f64,
    /// min over the outer superellipsoid piece of 𝓕[y] (graph-over-u)
    pub min_f_outer: f64,
    pub argmin_f: f64,
    /// min over the tip patch of 𝓕[y]
    pub min_f_tip: f64,
    pub positive: bool,
}

/// Evaluate 𝓖[ū] = 𝓛v̄ - v̄²/(2ū) - ū_y²·ū_yy/(1+ū_y²) on
/// [ell_int, 6L(τ0)] and 𝓕[y] = y_uu/(1+y_u²) + ((n-1)/u - u/2)·y_u + y/2
/// on the outer and tip pieces; the construction stands only if all three
/// margins are positive.
pub fn verify_initial_monotonicity(
    params: &PeanutParams,
    lambda: &[f64],
    bowl: &BowlProfile,
    basis: &HermiteBasis,
) -> Result<MonotonicityReport> {
    let c = params.cylinder();
    let nm1 = params.dimension as f64 - 1.0;
    let glue = |y: f64| {
        params
            .glued_deviation(y, lambda, basis)
            .expect("inner region inside superellipsoid domain")
    };

    // 𝓖 on the graph region (5-point stencils on the closure). At desk
    // aspect ratios the tip sits inside 6·L(τ0), so the region is capped
    // where the graph form ends; the graph-over-u functional covers the
    // rest with a wide overlap.
    let h = 1e-4;
    let y_hi = (6.0 * params.parabolic_scale(params.tau0))
        .min(params.graph_region_end(lambda, basis) - 3.0 * h);
    let mut min_g = f64::INFINITY;
    let mut argmin_g = params.ell_int;
    let n_samples = 1200;
    for i in 0..=n_samples {
        let y = params.ell_int + (y_hi - params.ell_int) * i as f64 / n_samples as f64;
        let vm2 = glue(y - 2.0 * h);
        let vm1 = glue(y - h);
        let v0 = glue(y);
        let vp1 = glue(y + h);
        let vp2 = glue(y + 2.0 * h);
        let vy = (vm2 - 8.0 * vm1 + 8.0 * vp1 - vp2) / (12.0 * h);
        let vyy = (-vm2 + 16.0 * vm1 - 30.0 * v0 + 16.0 * vp1 - vp2) / (12.0 * h * h);
        let lv = vyy - 0.5 * y * vy + v0;
        let g = lv - v0 * v0 / (2.0 * (c + v0)) - vy * vy * vyy / (1.0 + vy * vy);
        if g < min_g {
            min_g = g;
            argmin_g = y;
        }
    }

    // 𝓕 on the outer graph-over-u piece, from the tip cut up to the level
    // of ell_int
    let u_cut = params.tip_c1 * (-params.gamma() * params.tau0).exp();
    let emgt = params.emgt();
    let u_top = superellipsoid(params.ell_int, params.k_outer(), params.m, emgt, params.dimension)
        .ok_or_else(|| Error::domain("ell_int is beyond the superellipsoid"))?;
    let mut min_f = f64::INFINITY;
    let mut argmin_f = u_cut;
    let hu = 1e-6;
    for i in 0..=n_samples {
        let u = u_cut + (u_top - u_cut) * i as f64 / n_samples as f64;
        let y0 = params.y_of_u_outer(u);
        let ym = params.y_of_u_outer(u - hu);
        let yp = params.y_of_u_outer(u + hu);
        let yu = (yp - ym) / (2.0 * hu);
        let yuu = (yp - 2.0 * y0 + ym) / (hu * hu);
        let f = yuu / (1.0 + yu * yu) + (nm1 / u - 0.5 * u) * yu + 0.5 * y0;
        if f < min_f {
            min_f = f;
            argmin_f = u;
        }
    }

    // 𝓕 on the tip patch: (1/2 - a)·A + (z·B'(z) - B(z))/(2aA) + b/2
    let b_shift = params.y_of_u_outer(u_cut) - params.y_of_u_tip(u_cut, bowl);
    let aa = params.tip_a * params.big_a();
    let mut min_f_tip = f64::INFINITY;
    for i in 1..=n_samples {
        let u = u_cut * i as f64 / n_samples as f64;
        let z = aa * u;
        let star = z * bowl.b_prime(z) - bowl.b(z);
        let f = (0.5 - params.tip_a) * params.big_a() + star / (2.0 * aa) + 0.5 * b_shift;
        min_f_tip = min_f_tip.min(f);
    }

    Ok(MonotonicityReport {
        min_g_inner: min_g,
        argmin_g,
        min_f_outer: min_f,
        argmin_f,
        min_f_tip,
        positive: min_g > 0.0 && min_f > 0.0 && min_f_tip > 0.0,
    })
}

/// Options for the shooting search.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ShootOpts {
    ///窗 half-width of the graph window
    pub window: f64,
    pub h: f64,
    /// snapshot cadence for funnel checks
    pub dtau_snap: f64,
    /// funnel constant
    pub m0: f64,
    /// horizon beyond τ0
    pub horizon: f64,
    /// relative λ-box tolerance
    pub box_tol: f64,
}

impl Default for ShootOpts {
    fn default() -> Self {
        ShootOpts {
            window: 32.0,
            h: 0.1,
            dtau_snap: 0.05,
            m0: 1.0,
            horizon: 8.0,
            box_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Inside,
    Exited,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub lambda: Vec<f64>,
    pub status: TrialStatus,
    pub tau_exit: f64,
    /// unit exit direction in the (H0, H2) plane
    pub direction: (f64, f64),
    /// min over the run of funnel margin (bound - norm)/bound
    pub min_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ShootingState {
    pub lambda: Vec<f64>,
    pub m0: f64,
    pub horizon: f64,
    pub status: TrialStatus,
    pub margin_at_horizon: f64,
    pub trials: usize,
    pub final_box_diameter: f64,
    /// outer-bisection box diameters, one per level (monotone shrink)
    pub box_history: Vec<f64>,
}

/// Evolve one trial and watch the reference-subtracted unstable
/// projection against the funnel bound m0·e^{-2mγτ}.
fn run_trial(
    params: &PeanutParams,
    lambda: &[f64],
    opts: &ShootOpts,
    space: &GaussianSpace,
    record: &mut Vec<TrialRecord>,
) -> Result<TrialRecord> {
    let grid = Grid1::symmetric(opts.window, opts.h)?;
    let basis = &space.basis;
    let mut v: Vec<f64> = grid
        .nodes()
        .map(|y| {
            params
                .glued_deviation(y, lambda, basis)
                .expect("window inside superellipsoid domain")
        })
        .collect();
    let mut stepper = GraphStepper::new(params.dimension, grid.clone());
    let bc = {
        let p = params.clone();
        let w = opts.window;
        move |tau: f64| (p.boundary_deviation(-w, tau), p.boundary_deviation(w, tau))
    };

    // precompute weighted Hermite samples for Simpson projections
    let h0: Vec<f64> = grid.nodes().map(|_| 1.0).collect();
    let h2: Vec<f64> = grid.nodes().map(|y| basis.poly(2).eval(y)).collect();
    let hm: Vec<f64> = grid.nodes().map(|y| basis.poly(params.m).eval(y)).collect();
    let weight: Vec<f64> = grid.nodes().map(|y| (-y * y / 4.0).exp()).collect();
    let two_m_gamma = 2.0 * params.m as f64 * params.gamma();
    let k1 = params.k0;

    let project = |v: &[f64], tau: f64, buf: &mut Vec<f64>| -> (f64, f64) {
        // reference-subtracted remainder: v + k1·e^{-mγτ}·H_m, cut by ζ(y/L(τ))
        let l = params.parabolic_scale(tau);
        let em = (-(params.m as f64) * params.gamma() * tau).exp();
        buf.clear();
        buf.extend((0..grid.n_nodes).map(|i| {
            let y = grid.y(i);
            let zeta = quintic_cutoff(y / l);
            zeta * (v[i] + k1 * em * hm[i]) * weight[i]
        }));
        let p0: f64 = {
            let integrand: Vec<f64> = buf.iter().zip(h0.iter()).map(|(a, b)| a * b).collect();
            grid::simpson(&integrand, grid.h) / HermiteBasis::norm_sq(0)
        };
        let p2: f64 = {
            let integrand: Vec<f64> = buf.iter().zip(h2.iter()).map(|(a, b)| a * b).collect();
            grid::simpson(&integrand, grid.h) / HermiteBasis::norm_sq(2)
        };
        (p0, p2)
    };

    let norm_u = |p0: f64, p2: f64| {
        (p0 * p0 * HermiteBasis::norm_sq(0) + p2 * p2 * HermiteBasis::norm_sq(2)).sqrt()
    };

    let mut buf = Vec::new();
    let mut tau = params.tau0;
    let tau_end = params.tau0 + opts.horizon;
    let (mut p0, mut p2) = project(&v, tau, &mut buf);
    let mut prev = (tau, norm_u(p0, p2));
    let mut min_margin = f64::INFINITY;
    let outcome = loop {
        let bound = opts.m0 * (-two_m_gamma * tau).exp();
        let nu = norm_u(p0, p2);
        min_margin = min_margin.min((bound - nu) / bound);
        if nu >= bound {
            // linear interpolation in log(e^{2mγτ}·norm)
            let f_prev = (prev.1.max(1e-300)).ln() + two_m_gamma * prev.0 - opts.m0.ln();
            let f_now = (nu.max(1e-300)).ln() + two_m_gamma * tau - opts.m0.ln();
            let s = if (f_now - f_prev).abs() > 1e-300 {
                (-f_prev / (f_now - f_prev)).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let tau_exit = prev.0 + s * (tau - prev.0);
            let dir = (
                p0 * HermiteBasis::norm_sq(0).sqrt() / nu,
                p2 * HermiteBasis::norm_sq(2).sqrt() / nu,
            );
            break TrialRecord {
                lambda: lambda.to_vec(),
                status: TrialStatus::Exited,
                tau_exit,
                direction: dir,
                min_margin,
            };
        }
        if tau >= tau_end {
            break TrialRecord {
                lambda: lambda.to_vec(),
                status: TrialStatus::Inside,
                tau_exit: tau,
                direction: (0.0, 0.0),
                min_margin,
            };
        }
        prev = (tau, nu);
        let mut t_next = (tau + opts.dtau_snap).min(tau_end);
        while tau < t_next {
            let dt = stepper.suggest_dt(&v).min(t_next - tau);
            let taken = stepper.step_v(&mut v, tau, dt, &bc)?;
            tau += taken;
            if taken < dt * 0.99 {
                t_next = t_next.min(tau + opts.dtau_snap);
            }
        }
        let (a, b) = project(&v, tau, &mut buf);
        p0 = a;
        p2 = b;
    };
    record.push(outcome.clone());
    Ok(outcome)
}

/// Nested bisection over λ = (λ0, λ2): the inner loop zeroes the H0 exit
/// component, the outer loop the H2 one. Horizon-reaching runs count as
/// inside the funnel.
pub fn shoot_lambda(
    params: &PeanutParams,
    opts: &ShootOpts,
    space: &GaussianSpace,
    trace: &mut Vec<TrialRecord>,
) -> Result<ShootingState> {
    params.validate()?;
    if params.m != 4 {
        return Err(Error::domain("shooting is implemented for the 2-mode case m = 4"));
    }
    let two_m_gamma = 2.0 * params.m as f64 * params.gamma();
    let bound0 = 2.0 * opts.m0 * (-two_m_gamma * params.tau0).exp();
    let br0 = bound0 / HermiteBasis::norm_sq(0).sqrt();
    let br2 = bound0 / HermiteBasis::norm_sq(2).sqrt();

    // Inner search: given λ2, bisect λ0 on the sign of the H0 exit
    // component; an inside run ends the search.
    let inner = |l2: f64, trace: &mut Vec<TrialRecord>| -> Result<(f64, TrialRecord)> {
        let mut lo = -br0;
        let mut hi = br0;
        let rec_lo = run_trial(params, &[lo, l2], opts, space, trace)?;
        let rec_hi = run_trial(params, &[hi, l2], opts, space, trace)?;
        if rec_lo.status == TrialStatus::Inside {
            return Ok((lo, rec_lo));
        }
        if rec_hi.status == TrialStatus::Inside {
            return Ok((hi, rec_hi));
        }
        if rec_lo.direction.0.signum() == rec_hi.direction.0.signum() {
            return Err(Error::SearchFailed(format!(
                "no H0 sign change over the λ0 bracket at λ2 = {l2:.3e}: \
                 directions {:?} and {:?}",
                rec_lo.direction, rec_hi.direction
            )));
        }
        let (mut s_lo, mut best) = (rec_lo.direction.0.signum(), rec_lo);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            let rec = run_trial(params, &[mid, l2], opts, space, trace)?;
            if rec.status == TrialStatus::Inside {
                return Ok((mid, rec));
            }
            if rec.direction.0.signum() == s_lo {
                lo = mid;
                s_lo = rec.direction.0.signum();
            } else {
                hi = mid;
            }
            best = rec;
            if (hi - lo) < opts.box_tol * br0 {
                break;
            }
        }
        Ok((0.5 * (lo + hi), best))
    };

    // Outer search over λ2 on the H2 exit component.
    let mut lo = -br2;
    let mut hi = br2;
    let mut box_history = vec![hi - lo];
    let (l0_lo, rec_lo) = inner(lo, trace)?;
    if rec_lo.status == TrialStatus::Inside {
        return Ok(finish(params, opts, vec![l0_lo, lo], rec_lo, trace, box_history));
    }
    let (l0_hi, rec_hi) = inner(hi, trace)?;
    if rec_hi.status == TrialStatus::Inside {
        return Ok(finish(params, opts, vec![l0_hi, hi], rec_hi, trace, box_history));
    }
    if rec_lo.direction.1.signum() == rec_hi.direction.1.signum() {
        return Err(Error::SearchFailed(format!(
            "no H2 sign change over the λ2 bracket: directions {:?} and {:?}",
            rec_lo.direction, rec_hi.direction
        )));
    }
    let mut s_lo = rec_lo.direction.1.signum();
    let mut best = (vec![l0_lo, lo], rec_lo);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (l0, rec) = inner(mid, trace)?;
        if rec.status == TrialStatus::Inside {
            return Ok(finish(params, opts, vec![l0, mid], rec, trace, box_history));
        }
        if rec.direction.1.signum() == s_lo {
            lo = mid;
            s_lo = rec.direction.1.signum();
        } else {
            hi = mid;
        }
        best = (vec![l0, mid], rec);
        box_history.push(hi - lo);
        if (hi - lo) < opts.box_tol * br2 {
            break;
        }
    }
    Ok(finish(params, opts, best.0, best.1, trace, box_history))
}

fn finish(
    _params: &PeanutParams,
    opts: &ShootOpts,
    lambda: Vec<f64>,
    rec: TrialRecord,
    trace: &[TrialRecord],
    box_history: Vec<f64>,
) -> ShootingState {
    ShootingState {
        lambda,
        m0: opts.m0,
        horizon: rec.tau_exit,
        status: rec.status,
        margin_at_horizon: rec.min_margin,
        trials: trace.len(),
        final_box_diameter: box_history.last().copied().unwrap_or(f64::NAN),
        box_history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bowl::solve_bowl;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn test_params() -> PeanutParams {
        PeanutParams::defaults_for(4.0, 4.0)
    }

    #[test]
    fn superellipsoid_values() {
        // y = 0 gives the cylinder radius; direct formula elsewhere
        assert_relative_eq!(
            superellipsoid(0.0, 1.0, 4, 1e-4, 3).unwrap(),
            2.0,
            max_relative = 1e-15
        );
        let v = superellipsoid(5.0, 1.0, 4, 1e-4, 3).unwrap();
        assert_relative_eq!(v, (4.0f64 - 0.0625).sqrt(), max_relative = 1e-14);
        // root at y = (2(n-1)/k)^{1/m}·e^{γτ0}
        let p = test_params();
        let a = p.big_a();
        assert!(superellipsoid(a * 1.0001, p.k_outer(), 4, p.emgt(), 3).is_none());
        assert!(superellipsoid(a * 0.9999, p.k_outer(), 4, p.emgt(), 3).is_some());
    }

    #[test]
    fn u_lambda_values() {
        let basis = HermiteBasis::new(16).unwrap();
        let p = test_params();
        // λ = 0, y = 0: deviation is -K1·e^{-τ0}·H4(0) = -k0·e^{-τ0}·12
        let v = u_lambda_deviation(0.0, &[0.0, 0.0], p.k_outer(), 4, p.emgt(), 3, &basis);
        assert_relative_eq!(v, -p.k0 * p.emgt() * 12.0, max_relative = 1e-14);
        // λ0 = 1 shifts by H0 = 1
        let v1 = u_lambda_deviation(3.3, &[1.0, 0.0], p.k_outer(), 4, p.emgt(), 3, &basis);
        let v0 = u_lambda_deviation(3.3, &[0.0, 0.0], p.k_outer(), 4, p.emgt(), 3, &basis);
        assert_relative_eq!(v1 - v0, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn glue_mismatch_is_higher_order() {
        // On the gluing region the two descriptions differ only through
        // the H_m tail and the square-root expansion:
        // U_out - U_λ = O(e^{-mγτ0}·y^{m-2} + e^{-2mγτ0}·y^{2m}).
        let basis = HermiteBasis::new(16).unwrap();
        let p = test_params();
        let e1 = p.emgt();
        let e2 = e1 * e1;
        let mut worst_ratio: f64 = 0.0;
        let l = p.parabolic_scale(p.tau0);
        for i in 0..=100 {
            let y = l + l * i as f64 / 100.0;
            let uo =
                superellipsoid_deviation(y, p.k_outer(), 4, p.emgt(), 3).expect("inside domain");
            let ul = u_lambda_deviation(y, &[0.0, 0.0], p.k_outer(), 4, p.emgt(), 3, &basis);
            let bound = 12.0 * p.k0 * e1 * (1.0 + y * y) + e2 * y.powi(8);
            worst_ratio = worst_ratio.max((uo - ul).abs() / bound);
        }
        assert!(worst_ratio < 2.0, "gluing mismatch ratio {worst_ratio}");
    }

    #[test]
    fn cylinder_zeroes_the_monotonicity_functional() {
        // ū ≡ √(2(n-1)) gives 𝓖 = 0 exactly
        let c = cylinder_radius(3);
        let v0 = 0.0f64;
        let g = (0.0 - 0.5 * 0.0) - v0 * v0 / (2.0 * c);
        assert_abs_diff_eq!(g, 0.0);
    }

    #[test]
    fn initial_curve_builds_with_small_shift() {
        let p = test_params();
        let basis = HermiteBasis::new(16).unwrap();
        let bowl = solve_bowl(3, 60.0, 0.002).unwrap();
        let (curve, patch) = build_initial_curve(&p, &[0.0, 0.0], &bowl, 1600, &basis).unwrap();
        // series oracle: b ≈ -A·u_c²/(2m(n-1)) + B(z_c)/(aA) with
        // u_c = C1·e^{-γτ0} and z_c = aA·u_c; both terms are O(e^{-2γτ0})·A
        let e2g = (-2.0 * p.gamma() * p.tau0).exp();
        let u_c = p.tip_c1 * (-p.gamma() * p.tau0).exp();
        let z_c = p.tip_a * p.big_a() * u_c;
        let oracle = -p.big_a() * u_c * u_c / (p.m as f64 * 2.0 * 2.0)
            + bowl.b(z_c) / (p.tip_a * p.big_a());
        assert!(
            (patch.b_shift - oracle).abs() < 0.1 * oracle.abs().max(e2g),
            "b = {} vs series oracle {oracle}",
            patch.b_shift
        );
        assert!(patch.corner_slope_outer >= patch.corner_slope_patch);
        // ζ ≡ 1 region: curve equals U_λ exactly
        let l = p.parabolic_scale(p.tau0);
        let xs: Vec<f64> = (0..20).map(|i| l * i as f64 / 20.0).collect();
        let rs = crate::flow::curve::radius_graph(&curve, &xs);
        for (x, r) in xs.iter().zip(rs.iter()) {
            let exact = p.cylinder()
                + u_lambda_deviation(*x, &[0.0, 0.0], p.k_outer(), 4, p.emgt(), 3, &basis);
            assert_relative_eq!(*r, exact, max_relative = 1e-5);
        }
        // reflection symmetry to machine precision
        assert!(curve.symmetry_defect() < 1e-12);
        // tips near ±A
        assert_relative_eq!(-curve.x[0], p.big_a(), max_relative = 1e-2);
    }

    #[test]
    fn monotonicity_margins_positive_at_defaults() {
        let p = test_params();
        let basis = HermiteBasis::new(16).unwrap();
        let bowl = solve_bowl(3, 60.0, 0.002).unwrap();
        let rep = verify_initial_monotonicity(&p, &[0.0, 0.0], &bowl, &basis).unwrap();
        assert!(
            rep.positive,
            "margins: G {} at y={}, F {} at u={}, tip {}",
            rep.min_g_inner, rep.argmin_g, rep.min_f_outer, rep.argmin_f, rep.min_f_tip
        );
    }

    #[test]
    fn far_outside_lambda_exits_immediately() {
        let p = test_params();
        let space = GaussianSpace::standard();
        let opts = ShootOpts::default();
        let two_m_gamma = 2.0;
        let big = 50.0 * opts.m0 * (-two_m_gamma * p.tau0).exp();
        let mut trace = Vec::new();
        let rec = run_trial(&p, &[big, 0.0], &opts, &space, &mut trace).unwrap();
        assert_eq!(rec.status, TrialStatus::Exited);
        assert!(rec.tau_exit < p.tau0 + 0.2, "exit at {}", rec.tau_exit);
        assert!(rec.direction.0 > 0.9);
    }

    #[test]
    fn initial_projection_matches_lambda() {
        // ‖Ψ^u(τ0)‖² ≈ Σ λ²‖H‖² up to cutoff tails
        let p = test_params();
        let space = GaussianSpace::standard();
        let opts = ShootOpts::default();
        let grid = Grid1::symmetric(opts.window, opts.h).unwrap();
        let basis = &space.basis;
        let l0 = 3.0 * (-2.0 * p.tau0).exp();
        let l2 = -2.0 * (-2.0 * p.tau0).exp();
        let v: Vec<f64> = grid
            .nodes()
            .map(|y| p.glued_deviation(y, &[l0, l2], basis).unwrap())
            .collect();
        // project via the same reference-subtracted path used in trials
        let weight: Vec<f64> = grid.nodes().map(|y| (-y * y / 4.0).exp()).collect();
        let hm: Vec<f64> = grid.nodes().map(|y| basis.poly(4).eval(y)).collect();
        let l = p.parabolic_scale(p.tau0);
        let em = p.emgt();
        let remainder: Vec<f64> = (0..grid.n_nodes)
            .map(|i| {
                let y = grid.y(i);
                quintic_cutoff(y / l) * (v[i] + p.k0 * em * hm[i]) * weight[i]
            })
            .collect();
        let h2v: Vec<f64> = grid.nodes().map(|y| basis.poly(2).eval(y)).collect();
        let p0 = grid::simpson(&remainder, grid.h) / HermiteBasis::norm_sq(0);
        let integrand: Vec<f64> = remainder.iter().zip(h2v.iter()).map(|(a, b)| a * b).collect();
        let p2 = grid::simpson(&integrand, grid.h) / HermiteBasis::norm_sq(2);
        assert_relative_eq!(p0, l0, max_relative = 1e-4);
        assert_relative_eq!(p2, l2, max_relative = 1e-4);
    }
}
