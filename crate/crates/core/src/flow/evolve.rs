//! Run a curve to a stopping event, archiving snapshots on the way.

use serde::Serialize;

use crate::error::Error;
use crate::flow::curve::{
    detect_singularity, step_curve_until, GeneratingCurve, SingularityKind, SingularityReport,
    SingularityThresholds,
};

#[derive(Debug, Clone, Copy, Serialize)]
pub enum StopRule {
    TimeReached(f64),
    MinRadiusBelow(f64),
    CurvatureAbove(f64),
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<GeneratingCurve>,
    pub report: SingularityReport,
}

/// Evolve until a rule fires or a singularity is detected. Step-size
/// underflow becomes a `numerical_blowup` report, never a crash.
pub fn evolve_until(
    mut curve: GeneratingCurve,
    rules: &[StopRule],
    snapshot_dt: f64,
    max_steps: usize,
) -> Trajectory {
    let initial_diameter = curve.diameter();
    let thresholds = SingularityThresholds::for_scale(initial_diameter);
    let h_target = curve.total_length() / (curve.n_nodes() - 1) as f64;
    let mut times = vec![curve.time];
    let mut snapshots = vec![curve.clone()];
    let mut report: Option<SingularityReport> = None;

    let early = {
        let tol = thresholds.min_radius_tol;
        let ext = thresholds.extinction_diameter_frac * initial_diameter;
        move |c: &GeneratingCurve| c.min_interior_radius().0 < tol || c.diameter() < ext
    };

    't: for _ in 0..max_steps {
        match step_curve_until(&mut curve, snapshot_dt, h_target, &early) {
            Ok(_) => {}
            Err(Error::NumericalBlowup(_)) => {
                report = Some(SingularityReport {
                    kind: SingularityKind::NumericalBlowup,
                    time: curve.time,
                    location: curve.neck().map_or(0.0, |(_, x)| x),
                    min_radius: curve.plain_min_radius(),
                    max_curvature: curve.max_mean_curvature(),
                    lobe_balls: None,
                });
                break 't;
            }
            Err(_) => unreachable!("curve stepping only fails by blow-up"),
        }
        times.push(curve.time);
        snapshots.push(curve.clone());

        if let Some(r) = detect_singularity(&curve, &thresholds, initial_diameter) {
            report = Some(r);
            break 't;
        }
        for rule in rules {
            let fire = match *rule {
                StopRule::TimeReached(t) => curve.time >= t - 1e-12,
                StopRule::MinRadiusBelow(r) => curve.min_interior_radius().0 < r,
                StopRule::CurvatureAbove(k) => curve.max_mean_curvature() > k,
            };
            if fire {
                break 't;
            }
        }
    }

    Trajectory {
        times,
        snapshots,
        report: report.unwrap_or_else(|| SingularityReport::none(curve.time)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::curve::CurveMode;

    #[test]
    fn sphere_run_reports_spherical_extinction() {
        // extinction at t ≈ R₀²/(2n) within 1%
        let r0: f64 = 0.6;
        let n_dim = 3;
        let curve = GeneratingCurve::sphere(r0, 200, n_dim, CurveMode::Unrescaled);
        let t_exact = r0 * r0 / (2.0 * n_dim as f64);
        let traj = evolve_until(curve, &[], t_exact / 100.0, 100_000);
        assert_eq!(traj.report.kind, SingularityKind::SphericalExtinction);
        assert!(
            (traj.report.time - t_exact).abs() < 0.01 * t_exact,
            "extinction at {} vs {}",
            traj.report.time,
            t_exact
        );
    }

    #[test]
    fn dumbbell_pinches_at_the_neck() {
        // thin neck (0.2) between radius-2 lobes; the enclosing cylinder
        // over the neck forces a pinch before the inscribed lobe balls
        // (radius ≈ 1.8, shrink time ≈ 0.55) can vanish.
        let profile = |x: f64| {
            let l2 = 16.0f64;
            ((l2 - x * x) * (0.04 + 1.0 * x * x) / l2).sqrt()
        };
        let curve =
            GeneratingCurve::from_profile(profile, 4.0, 700, 0.0, 3, CurveMode::Unrescaled)
                .unwrap();
        let traj = evolve_until(curve, &[], 5e-4, 400_000);
        assert_eq!(traj.report.kind, SingularityKind::NeckAtOrigin);
        assert!(traj.report.location.abs() < 0.05 * 8.0);
        // cylinder comparison bound: pinch by r_neck²/(2(n-1)) = 0.01
        assert!(traj.report.time < 0.02, "pinch at t = {}", traj.report.time);
        let (l, r) = traj.report.lobe_balls.unwrap();
        assert!(l > 1.0 && r > 1.0);
    }

    #[test]
    fn capped_runs_stop_on_time() {
        let curve = GeneratingCurve::sphere(1.0, 120, 3, CurveMode::Unrescaled);
        let traj = evolve_until(curve, &[StopRule::TimeReached(0.01)], 2e-3, 10_000);
        assert_eq!(traj.report.kind, SingularityKind::None);
        assert!(traj.times.last().unwrap() >= &0.0099);
    }
}
