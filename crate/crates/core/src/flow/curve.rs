//! Parametric generating-curve solver.
//!
//! The hypersurface is the rotation of a planar curve (x, r), r ≥ 0, with
//! both endpoints on the axis. Conventions, fixed by requiring that the
//! cylinder is stationary in rescaled mode and spheres shrink in
//! unrescaled mode:
//!
//! * outward unit normal N = (-r', x')/|(x', r')|,
//! * principal curvatures κ₁ (curve) and κ₂ = N_r / r, both positive on
//!   convex caps, mean curvature H = κ₁ + (n-1)·κ₂ (so H = n/R on a
//!   sphere of radius R),
//! * normal speed -H (unrescaled) or -H + ⟨X, N⟩/2 (rescaled),
//! * at the poles κ₂ → κ₁, so H = n·κ₁ there, and the pole slides along
//!   the axis.


use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::interp_uniform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CurveMode {
    Rescaled,
    Unrescaled,
}

#[derive(Debug, Clone)]
pub struct GeneratingCurve {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub time: f64,
    pub dimension: usize,
    pub mode: CurveMode,
    /// mirror-symmetrize after each redistribution (valid for curves built
    /// from even profiles; keeps the even-symmetry invariant at 1e-12)
    pub enforce_symmetry: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SingularityKind {
    None,
    SphericalExtinction,
    NeckAtOrigin,
    NumericalBlowup,
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularityReport {
    pub kind: SingularityKind,
    pub time: f64,
    /// x at the interior radius minimum
    pub location: f64,
    pub min_radius: f64,
    pub max_curvature: f64,
    /// inscribed-ball radii of the two lobes at detection (neck reports)
    pub lobe_balls: Option<(f64, f64)>,
}

impl SingularityReport {
    pub fn none(time: f64) -> Self {
        SingularityReport {
            kind: SingularityKind::None,
            time,
            location: 0.0,
            min_radius: 0.0,
            max_curvature: 0.0,
            lobe_balls: None,
        }
    }
}

/// Detection thresholds, scaled off the initial curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SingularityThresholds {
    pub min_radius_tol: f64,
    pub curvature_cap: f64,
    /// relative diameter below which everything counts as extinct
    pub extinction_diameter_frac: f64,
    /// neck must sit within this fraction of the diameter from x = 0
    pub neck_location_frac: f64,
    /// lobes must contain axis balls at least this large
    pub r_ball: f64,
}

impl SingularityThresholds {
    pub fn for_scale(scale: f64) -> Self {
        SingularityThresholds {
            min_radius_tol: 1e-3 * scale,
            curvature_cap: 1e4 / scale,
            extinction_diameter_frac: 0.02,
            neck_location_frac: 0.05,
            r_ball: 0.05 * scale,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepOutcome {
    pub substeps: usize,
    pub clamped: bool,
    pub min_radius: f64,
    pub max_curvature: f64,
    pub max_speed: f64,
}

struct Geometry {
    kappa1: Vec<f64>,
    kappa2: Vec<f64>,
    normal: Vec<(f64, f64)>,
    speed: Vec<f64>,
}

impl GeneratingCurve {
    pub fn new(
        x: Vec<f64>,
        r: Vec<f64>,
        time: f64,
        dimension: usize,
        mode: CurveMode,
    ) -> Result<Self> {
        let c = GeneratingCurve {
            x,
            r,
            time,
            dimension,
            mode,
            enforce_symmetry: true,
        };
        c.validate()?;
        Ok(c)
    }

    /// Half-circle generating curve of a round sphere.
    pub fn sphere(radius: f64, n_nodes: usize, dimension: usize, mode: CurveMode) -> Self {
        let n = n_nodes.max(9);
        let mut x = Vec::with_capacity(n);
        let mut r = Vec::with_capacity(n);
        for i in 0..n {
            let phi = std::f64::consts::PI * i as f64 / (n - 1) as f64;
            x.push(-radius * phi.cos());
            r.push((radius * phi.sin()).max(0.0));
        }
        r[0] = 0.0;
        *r.last_mut().unwrap() = 0.0;
        GeneratingCurve {
            x,
            r,
            time: 0.0,
            dimension,
            mode,
            enforce_symmetry: true,
        }
    }

    /// Closed curve from an even radius profile r(x) > 0 on (-L, L) with
    /// square-root caps, sampled at roughly uniform arclength.
    pub fn from_profile(
        profile: impl Fn(f64) -> f64,
        half_len: f64,
        n_nodes: usize,
        time: f64,
        dimension: usize,
        mode: CurveMode,
    ) -> Result<Self> {
        // dense polyline first, then arclength resample
        let dense = (8 * n_nodes).max(2048);
        let mut x = Vec::with_capacity(dense + 1);
        let mut r = Vec::with_capacity(dense + 1);
        for i in 0..=dense {
            let xi = -half_len + 2.0 * half_len * i as f64 / dense as f64;
            let ri = if i == 0 || i == dense { 0.0 } else { profile(xi).max(0.0) };
            x.push(xi);
            r.push(ri);
        }
        let mut curve = GeneratingCurve {
            x,
            r,
            time,
            dimension,
            mode,
            enforce_symmetry: true,
        };
        curve.resample(n_nodes);
        curve.validate()?;
        Ok(curve)
    }

    pub fn n_nodes(&self) -> usize {
        self.x.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if n < 9 || self.r.len() != n {
            return Err(Error::domain("curve needs at least 9 matched nodes"));
        }
        if self.r[0] != 0.0 || self.r[n - 1] != 0.0 {
            return Err(Error::domain("curve endpoints must lie on the axis"));
        }
        if self.r[1..n - 1].iter().any(|&ri| ri < 0.0) {
            return Err(Error::domain("interior radii must be nonnegative"));
        }
        // Perpendicular contact: the chord from the pole tilts by half the
        // arc angle h·κ of the cap, so the 2° standard only applies when
        // the cap is resolved (h·κ small); an under-resolved cap carries
        // its geometry through the circumcircle curvature instead.
        for (a, b) in [(0usize, 1usize), (n - 1, n - 2)] {
            let dx = (self.x[b] - self.x[a]).abs();
            let dr = (self.r[b] - self.r[a]).abs();
            if dr <= 0.0 {
                return Err(Error::domain("curve leaves the axis tangentially"));
            }
            let d2 = dx * dx + dr * dr;
            let cap_angle = 2.0 * dx * d2.sqrt() / d2; // ≈ h·κ_pole
            if cap_angle < 0.05 && dx / dr > (2.0f64).to_radians().tan() * 4.0 {
                return Err(Error::domain(
                    "curve must meet the axis perpendicularly (within tolerance)",
                ));
            }
        }
        Ok(())
    }

    pub fn arclengths(&self) -> Vec<f64> {
        let n = self.n_nodes();
        let mut s = Vec::with_capacity(n);
        s.push(0.0);
        for i in 1..n {
            let ds = ((self.x[i] - self.x[i - 1]).powi(2) + (self.r[i] - self.r[i - 1]).powi(2))
                .sqrt();
            s.push(s[i - 1] + ds);
        }
        s
    }

    pub fn total_length(&self) -> f64 {
        *self.arclengths().last().unwrap()
    }

    pub fn diameter(&self) -> f64 {
        let xmin = self.x.iter().cloned().fold(f64::INFINITY, f64::min);
        let xmax = self.x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let rmax = self.r.iter().cloned().fold(0.0f64, f64::max);
        (xmax - xmin).max(2.0 * rmax)
    }

    pub fn max_radius(&self) -> f64 {
        self.r.iter().cloned().fold(0.0, f64::max)
    }

    /// Neck radius: the smallest interior local minimum of r and its
    /// location. The monotone decline into the two caps does not count;
    /// a sphere has no neck.
    pub fn neck(&self) -> Option<(f64, f64)> {
        let n = self.n_nodes();
        let mut best: Option<(f64, f64)> = None;
        for i in 2..n - 2 {
            if self.r[i] <= self.r[i - 1] && self.r[i] <= self.r[i + 1] {
                if best.map_or(true, |(r, _)| self.r[i] < r) {
                    best = Some((self.r[i], self.x[i]));
                }
            }
        }
        best
    }

    /// Neck radius and location, with (+∞, 0) when there is no neck.
    pub fn min_interior_radius(&self) -> (f64, f64) {
        self.neck().unwrap_or((f64::INFINITY, 0.0))
    }

    /// Plain minimum of r over the interior nodes (caps included).
    pub fn plain_min_radius(&self) -> f64 {
        self.r[1..self.n_nodes() - 1]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Radius of the circumcircle through the max-radius node and its
    /// neighbors; exact for circles, O(h²)-accurate for near-circles, and
    /// free of the polygonal sagitta bias of `max_radius`.
    pub fn radius_estimate(&self) -> f64 {
        let n = self.n_nodes();
        let mut imax = 1;
        for i in 1..n - 1 {
            if self.r[i] > self.r[imax] {
                imax = i;
            }
        }
        let i = imax.clamp(1, n - 2);
        let (ax, ar) = (self.x[i - 1], self.r[i - 1]);
        let (bx, br) = (self.x[i], self.r[i]);
        let (cx, cr) = (self.x[i + 1], self.r[i + 1]);
        let (u1, u2) = (bx - ax, br - ar);
        let (v1, v2) = (cx - bx, cr - br);
        let (w1, w2) = (cx - ax, cr - ar);
        let lu = (u1 * u1 + u2 * u2).sqrt();
        let lv = (v1 * v1 + v2 * v2).sqrt();
        let lw = (w1 * w1 + w2 * w2).sqrt();
        let cross = (u1 * v2 - u2 * v1).abs();
        if cross < 1e-300 {
            return self.r[imax];
        }
        lu * lv * lw / (2.0 * cross)
    }

    fn geometry(&self) -> Geometry {
        let n = self.n_nodes();
        let nm1 = self.dimension as f64 - 1.0;
        let mut kappa1 = vec![0.0; n];
        let mut kappa2 = vec![0.0; n];
        let mut normal = vec![(0.0, 0.0); n];

        for i in 1..n - 1 {
            let (ax, ar) = (self.x[i - 1], self.r[i - 1]);
            let (bx, br) = (self.x[i], self.r[i]);
            let (cx, cr) = (self.x[i + 1], self.r[i + 1]);
            let (u1, u2) = (bx - ax, br - ar);
            let (v1, v2) = (cx - bx, cr - br);
            let lu = (u1 * u1 + u2 * u2).sqrt();
            let lv = (v1 * v1 + v2 * v2).sqrt();
            let (w1, w2) = (cx - ax, cr - ar);
            let lw = (w1 * w1 + w2 * w2).sqrt();
            let cross = u1 * v2 - u2 * v1;
            kappa1[i] = -2.0 * cross / (lu * lv * lw).max(1e-300);
            let g = lw.max(1e-300);
            let nx = -(cr - ar) / g;
            let nr = (cx - ax) / g;
            normal[i] = (nx, nr);
            kappa2[i] = if self.r[i] > 1e-12 {
                nr / self.r[i]
            } else {
                kappa1[i]
            };
        }
        // poles: mirrored circumcircle through the first interior node
        let dl2 = (self.x[1] - self.x[0]).powi(2) + self.r[1].powi(2);
        kappa1[0] = 2.0 * (self.x[1] - self.x[0]) / dl2.max(1e-300);
        kappa2[0] = kappa1[0];
        normal[0] = (-1.0, 0.0);
        let dr2 = (self.x[n - 1] - self.x[n - 2]).powi(2) + self.r[n - 2].powi(2);
        kappa1[n - 1] = 2.0 * (self.x[n - 1] - self.x[n - 2]) / dr2.max(1e-300);
        kappa2[n - 1] = kappa1[n - 1];
        normal[n - 1] = (1.0, 0.0);

        let mut speed = vec![0.0; n];
        for i in 0..n {
            let h = kappa1[i] + nm1 * kappa2[i];
            let f = match self.mode {
                CurveMode::Unrescaled => -h,
                CurveMode::Rescaled => {
                    let (nx, nr) = normal[i];
                    -h + 0.5 * (self.x[i] * nx + self.r[i] * nr)
                }
            };
            speed[i] = f;
        }
        Geometry {
            kappa1,
            kappa2,
            normal,
            speed,
        }
    }

    /// All principal curvatures strictly positive (margin in units of
    /// 1/scale); the convexity test used by the classifier.
    pub fn is_convex(&self, margin: f64) -> bool {
        let g = self.geometry();
        let n = self.n_nodes();
        (0..n).all(|i| g.kappa1[i] > margin && g.kappa2[i] > margin)
    }

    pub fn max_mean_curvature(&self) -> f64 {
        let g = self.geometry();
        let nm1 = self.dimension as f64 - 1.0;
        (0..self.n_nodes())
            .map(|i| (g.kappa1[i] + nm1 * g.kappa2[i]).abs())
            .fold(0.0, f64::max)
    }

    fn mean_spacing(&self) -> f64 {
        self.total_length() / (self.n_nodes() - 1) as f64
    }

    /// Resample to `n_new` nodes at uniform arclength (cubic Lagrange in
    /// the arclength parameter), optionally mirror-symmetrizing.
    pub fn resample(&mut self, n_new: usize) {
        let n_new = n_new.max(9);
        let s = self.arclengths();
        let total = *s.last().unwrap();
        let n = self.n_nodes();
        let mut xs = Vec::with_capacity(n_new);
        let mut rs = Vec::with_capacity(n_new);
        let mut seg = 0usize;
        for j in 0..n_new {
            let target = total * j as f64 / (n_new - 1) as f64;
            while seg + 1 < n - 1 && s[seg + 1] < target {
                seg += 1;
            }
            // 4-point stencil around [seg, seg+1]
            let i0 = seg.saturating_sub(1).min(n - 4);
            let mut xv = 0.0;
            let mut rv = 0.0;
            for k in 0..4 {
                let mut l = 1.0;
                for m in 0..4 {
                    if m != k {
                        let denom = s[i0 + k] - s[i0 + m];
                        l *= (target - s[i0 + m]) / denom;
                    }
                }
                xv += self.x[i0 + k] * l;
                rv += self.r[i0 + k] * l;
            }
            xs.push(xv);
            rs.push(rv.max(0.0));
        }
        xs[0] = self.x[0];
        rs[0] = 0.0;
        *xs.last_mut().unwrap() = *self.x.last().unwrap();
        *rs.last_mut().unwrap() = 0.0;
        self.x = xs;
        self.r = rs;
        if self.enforce_symmetry {
            self.symmetrize();
        }
    }

    fn symmetrize(&mut self) {
        let n = self.n_nodes();
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let xa = 0.5 * (self.x[i] - self.x[j]);
            self.x[i] = xa;
            self.x[j] = -xa;
            let ra = 0.5 * (self.r[i] + self.r[j]);
            self.r[i] = ra;
            self.r[j] = ra;
        }
        if n % 2 == 1 {
            self.x[n / 2] = 0.0;
        }
    }

    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n_nodes();
        let mut worst: f64 = 0.0;
        for i in 0..n / 2 {
            let j = n - 1 - i;
            worst = worst.max((self.x[i] + self.x[j]).abs());
            worst = worst.max((self.r[i] - self.r[j]).abs());
        }
        worst
    }

    /// Does any non-adjacent segment pair intersect?
    pub fn self_intersects(&self) -> bool {
        let n = self.n_nodes();
        for i in 0..n - 1 {
            for j in i + 2..n - 1 {
                if segments_cross(
                    (self.x[i], self.r[i]),
                    (self.x[i + 1], self.r[i + 1]),
                    (self.x[j], self.r[j]),
                    (self.x[j + 1], self.r[j + 1]),
                ) {
                    return true;
                }
            }
        }
        false
    }

    /// Largest ball centered on the axis inside the body, with center
    /// restricted to [x_lo, x_hi]: max over centers of the min distance to
    /// the curve.
    pub fn inscribed_ball_on_axis(&self, x_lo: f64, x_hi: f64) -> (f64, f64) {
        let mut best = (0.5 * (x_lo + x_hi), 0.0);
        for c in self.x.iter().cloned().filter(|&c| c >= x_lo && c <= x_hi) {
            let mut d = f64::INFINITY;
            for i in 0..self.n_nodes() {
                let dd = ((self.x[i] - c).powi(2) + self.r[i].powi(2)).sqrt();
                if dd < d {
                    d = dd;
                }
            }
            if d > best.1 {
                best = (c, d);
            }
        }
        best
    }

    /// CSV export `arclength,x,r`.
    pub fn write_csv(&self, mut out: impl std::io::Write) -> Result<()> {
        writeln!(out, "arclength,x,r")?;
        let s = self.arclengths();
        for i in 0..self.n_nodes() {
            writeln!(out, "{:.12e},{:.12e},{:.12e}", s[i], self.x[i], self.r[i])?;
        }
        Ok(())
    }
}

fn segments_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    fn orient(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
        (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
    }
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Advance the curve by `dt` (splitting into stable substeps internally),
/// redistributing to uniform arclength after every substep. `h_target`
/// fixes the node budget: the count adapts to keep spacing in
/// [h_target, 2·h_target].
pub fn step_curve(curve: &mut GeneratingCurve, dt: f64, h_target: f64) -> Result<StepOutcome> {
    step_curve_until(curve, dt, h_target, &|_| false)
}

/// `step_curve` with an early-exit predicate. Substeps scale like the
/// squared neck radius, so near a pinch the caller must be able to stop
/// the march as soon as its detection threshold is crossed.
pub fn step_curve_until(
    curve: &mut GeneratingCurve,
    dt: f64,
    h_target: f64,
    stop: &dyn Fn(&GeneratingCurve) -> bool,
) -> Result<StepOutcome> {
    let mut remaining = dt;
    let mut outcome = StepOutcome::default();
    let nm1 = (curve.dimension as f64 - 1.0).max(1.0);
    while remaining > 0.0 && !stop(curve) {
        let g = curve.geometry();
        let n = curve.n_nodes();
        let h = curve.mean_spacing();
        let max_kappa = g
            .kappa1
            .iter()
            .chain(g.kappa2.iter())
            .fold(0.0f64, |m, &k| m.max(k.abs()));
        let max_speed = g.speed.iter().fold(0.0f64, |m, &f| m.max(f.abs()));
        let neck = curve.neck().map_or(f64::INFINITY, |(r, _)| r);
        let mut step = (h * h / (2.0 * (1.0 + max_kappa)))
            .min(0.25 * neck * neck / nm1)
            .min(0.5 * h / max_speed.max(1e-300));
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::NumericalBlowup(
                "curve step size underflow".to_string(),
            ));
        }
        step = step.min(remaining);

        // Heun: full predictor curve, then average the two slopes.
        let mut clamped = false;
        let mut pred = curve.clone();
        for i in 0..n {
            let (nx, nr) = g.normal[i];
            pred.x[i] += step * g.speed[i] * nx;
            if i > 0 && i < n - 1 {
                pred.r[i] = (pred.r[i] + step * g.speed[i] * nr).max(1e-14);
            }
        }
        let g2 = pred.geometry();
        for i in 0..n {
            let (nx1, nr1) = g.normal[i];
            let (nx2, nr2) = g2.normal[i];
            curve.x[i] += 0.5 * step * (g.speed[i] * nx1 + g2.speed[i] * nx2);
            if i > 0 && i < n - 1 {
                let r_new = curve.r[i] + 0.5 * step * (g.speed[i] * nr1 + g2.speed[i] * nr2);
                if r_new < 0.0 {
                    clamped = true;
                    curve.r[i] = 1e-14;
                } else {
                    curve.r[i] = r_new;
                }
            }
        }
        if curve.x.iter().any(|v| !v.is_finite()) || curve.r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup("curve coordinates went non-finite".into()));
        }
        let n_new = ((curve.total_length() / (1.5 * h_target)).round() as usize + 1).max(9);
        curve.resample(n_new);
        curve.time += step;
        remaining -= step;
        outcome.substeps += 1;
        outcome.clamped |= clamped;
        outcome.max_curvature = outcome.max_curvature.max(max_kappa);
        outcome.max_speed = outcome.max_speed.max(max_speed);
    }
    outcome.min_radius = curve.neck().map_or(f64::INFINITY, |(r, _)| r);
    Ok(outcome)
}

/// Inspect the curve for a singular event.
pub fn detect_singularity(
    curve: &GeneratingCurve,
    thresholds: &SingularityThresholds,
    initial_diameter: f64,
) -> Option<SingularityReport> {
    let (rmin, xloc) = curve.min_interior_radius();
    let diam = curve.diameter();
    let maxk = curve.max_mean_curvature();
    if diam < thresholds.extinction_diameter_frac * initial_diameter {
        return Some(SingularityReport {
            kind: SingularityKind::SphericalExtinction,
            time: curve.time,
            location: 0.0,
            min_radius: curve.plain_min_radius(),
            max_curvature: maxk,
            lobe_balls: None,
        });
    }
    if rmin < thresholds.min_radius_tol {
        if xloc.abs() < thresholds.neck_location_frac * diam {
            let xmin = curve.x[0];
            let xmax = *curve.x.last().unwrap();
            let (_, left) = curve.inscribed_ball_on_axis(xmin, xloc - 2.0 * rmin);
            let (_, right) = curve.inscribed_ball_on_axis(xloc + 2.0 * rmin, xmax);
            if left >= thresholds.r_ball && right >= thresholds.r_ball {
                return Some(SingularityReport {
                    kind: SingularityKind::NeckAtOrigin,
                    time: curve.time,
                    location: xloc,
                    min_radius: rmin,
                    max_curvature: maxk,
                    lobe_balls: Some((left, right)),
                });
            }
        }
        // a pinch that fails the neck-at-origin criteria: report the data
        // without claiming a kind
        return Some(SingularityReport {
            kind: SingularityKind::None,
            time: curve.time,
            location: xloc,
            min_radius: rmin,
            max_curvature: maxk,
            lobe_balls: None,
        });
    }
    if maxk > thresholds.curvature_cap {
        return Some(SingularityReport {
            kind: SingularityKind::None,
            time: curve.time,
            location: xloc,
            min_radius: rmin,
            max_curvature: maxk,
            lobe_balls: None,
        });
    }
    None
}

/// Evaluate the curve radius as a graph over x on a window where it is
/// graph-like (used for cross-validation against the graph solver).
pub fn radius_graph(curve: &GeneratingCurve, xs: &[f64]) -> Vec<f64> {
    // the curve's x need not be monotone globally, but is on graph windows
    let n = curve.n_nodes();
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        let mut j = 0;
        while j + 1 < n && !(curve.x[j] <= x && x <= curve.x[j + 1]) {
            j += 1;
        }
        if j + 1 >= n {
            out.push(f64::NAN);
            continue;
        }
        let t = (x - curve.x[j]) / (curve.x[j + 1] - curve.x[j]).max(1e-300);
        out.push(curve.r[j] * (1.0 - t) + curve.r[j + 1] * t);
    }
    out
}

/// Convenience for tests: uniform resampling helper on tabulated data.
pub fn resample_uniform(values: &[f64], x0: f64, h: f64, xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|&x| interp_uniform(x0, h, values, x)).collect()
}
