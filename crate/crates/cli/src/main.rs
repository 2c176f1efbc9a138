//! Reproducible front end: every experiment is a subcommand that reads a
//! JSON config, runs deterministically, and writes manifests plus tidy
//! CSV under the output root.
//!
//! Exit codes: 0 ok, 1 usage/config, 2 construction rejected, 3 missing
//! dependency artifact, 4 verification failure.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use mcflab::bowl::{solve_bowl, BowlProfile};
use mcflab::config::RunConfig;
use mcflab::error::Error;
use mcflab::experiment::classify::{
    barrier_trapping_check, classify_run, height_bounds_at_tau2, neck_funnel_track, Class,
};
use mcflab::experiment::{
    inner_outer_check, run_funnel, PerturbConfig,
};
use mcflab::hermite::GaussianSpace;
use mcflab::peanut::{
    build_initial_curve, shoot_lambda, verify_initial_monotonicity, ShootingState,
};
use mcflab::barriers::{
    assemble_q_minus, peanut_translate_alpha, verify_subsolution_qminus,
    verify_supersolution_qplus, BarrierSpec,
};

#[derive(Parser)]
#[command(
    name = "mcflab",
    about = "Numerical laboratory for axisymmetric mean curvature flow near degenerate neckpinches",
    version
)]
struct Cli {
    /// JSON config file; defaults apply to every omitted field
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// output root (defaults to $MCFLAB_OUT or ./out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct the initial surface, select the gluing coefficients by
    /// shooting, and verify the initial monotonicity margins
    BuildPeanut,
    /// Perturb the built surface at one angle and classify the outcome
    Run {
        /// launch angle of Ω = (cos a, sin a)
        #[arg(long, allow_hyphen_values = true)]
        angle: f64,
        /// override ε = epsilon_factor·e^{-τ0}
        #[arg(long)]
        epsilon_factor: Option<f64>,
    },
    /// Funnel runs over a fan of angles; exit data per angle
    Sweep {
        #[arg(long, default_value_t = 16)]
        angles: usize,
        /// classify each run as well (slower)
        #[arg(long, default_value_t = false)]
        classify: bool,
    },
    /// Bisect the classification boundary angle
    Bisect {
        #[arg(long, default_value_t = 1e-3)]
        width: f64,
    },
    /// Residual sign checks, trapping, and height bounds for the barriers
    VerifyBarriers,
    /// Inner-outer constant, growth monitors, translate-α, mode ordering,
    /// and the ratio trend over an ε-sweep
    Diagnostics,
    /// Re-export the stored surface and the bowl profile as CSV
    Export,
}

fn output_root(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os("MCFLAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_config(cli: &Cli) -> Result<RunConfig, ExitFail> {
    match &cli.config {
        None => Ok(RunConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| ExitFail::usage(format!("cannot read config {path:?}: {e}")))?;
            RunConfig::from_json(&text)
                .map_err(|e| ExitFail::usage(format!("invalid config {path:?}: {e}")))
        }
    }
}

/// Error carrying its process exit code.
struct ExitFail {
    code: u8,
    msg: String,
}

impl ExitFail {
    fn usage(msg: impl Into<String>) -> Self {
        ExitFail {
            code: 1,
            msg: msg.into(),
        }
    }
    fn rejected(msg: impl Into<String>) -> Self {
        ExitFail {
            code: 2,
            msg: msg.into(),
        }
    }
    fn missing(msg: impl Into<String>) -> Self {
        ExitFail {
            code: 3,
            msg: msg.into(),
        }
    }
    fn verification(msg: impl Into<String>) -> Self {
        ExitFail {
            code: 4,
            msg: msg.into(),
        }
    }
}

fn internal(e: Error) -> ExitFail {
    match e {
        Error::Rejected(m) => ExitFail::rejected(m),
        Error::Domain(m) => ExitFail::usage(m),
        other => ExitFail {
            code: 4,
            msg: other.to_string(),
        },
    }
}

#[derive(Serialize)]
struct PeanutArchive {
    config: RunConfig,
    lambda: Vec<f64>,
    shooting: ShootingState,
    monotonicity: mcflab::peanut::MonotonicityReport,
    tip_patch: mcflab::peanut::TipPatch,
}

fn archive_path(root: &Path) -> PathBuf {
    root.join("peanut")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ExitFail> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| ExitFail::usage(format!("serialization: {e}")))?;
    fs::write(path, text).map_err(|e| ExitFail::usage(format!("write {path:?}: {e}")))
}

fn load_archive(root: &Path) -> Result<(RunConfig, Vec<f64>), ExitFail> {
    let path = archive_path(root).join("archive.json");
    let text = fs::read_to_string(&path).map_err(|_| {
        ExitFail::missing(format!(
            "no peanut archive at {path:?}; run `mcflab build-peanut` first"
        ))
    })?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| ExitFail::missing(format!("bad archive: {e}")))?;
    let config: RunConfig = serde_json::from_value(value["config"].clone())
        .map_err(|e| ExitFail::missing(format!("bad archive config: {e}")))?;
    let lambda: Vec<f64> = serde_json::from_value(value["lambda"].clone())
        .map_err(|e| ExitFail::missing(format!("bad archive lambda: {e}")))?;
    Ok((config, lambda))
}

fn solve_bowl_for(cfg: &RunConfig) -> Result<BowlProfile, ExitFail> {
    solve_bowl(cfg.peanut.dimension, cfg.bowl_z_max, cfg.bowl_h).map_err(internal)
}

fn cmd_build_peanut(cli: &Cli) -> Result<(), ExitFail> {
    let cfg = load_config(cli)?;
    cfg.validate().map_err(|e| ExitFail::usage(e.to_string()))?;
    let root = output_root(cli);
    let dir = archive_path(&root);
    fs::create_dir_all(&dir).map_err(|e| ExitFail::usage(e.to_string()))?;

    let space = GaussianSpace::standard();
    let bowl = solve_bowl_for(&cfg)?;

    let mut trace = Vec::new();
    let shooting =
        shoot_lambda(&cfg.peanut, &cfg.shoot, &space, &mut trace).map_err(internal)?;
    let lambda = shooting.lambda.clone();

    let (curve, tip_patch) =
        build_initial_curve(&cfg.peanut, &lambda, &bowl, cfg.curve_nodes, &space.basis)
            .map_err(internal)?;
    let monotonicity =
        verify_initial_monotonicity(&cfg.peanut, &lambda, &bowl, &space.basis).map_err(internal)?;
    if !monotonicity.positive {
        return Err(ExitFail::rejected(format!(
            "monotonicity margins not positive: {monotonicity:?}"
        )));
    }

    let mut curve_csv = Vec::new();
    curve.write_csv(&mut curve_csv).map_err(internal)?;
    fs::write(dir.join("curve.csv"), curve_csv).map_err(|e| ExitFail::usage(e.to_string()))?;

    let mut lines = String::new();
    for rec in &trace {
        lines.push_str(&serde_json::to_string(rec).unwrap());
        lines.push('\n');
    }
    fs::write(dir.join("shooting_trace.jsonl"), lines)
        .map_err(|e| ExitFail::usage(e.to_string()))?;

    let archive = PeanutArchive {
        config: cfg,
        lambda,
        shooting,
        monotonicity,
        tip_patch,
    };
    write_json(&dir.join("archive.json"), &archive)?;
    println!("peanut archive written to {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct RunManifest {
    config: RunConfig,
    angle: f64,
    epsilon: f64,
    class: Class,
    tau1: Option<f64>,
    exit_direction: Option<(f64, f64)>,
    tau_event: Option<f64>,
    lobe_survival_factor: Option<f64>,
    max_quotient: f64,
    detail: String,
}

fn one_run(
    cfg: &RunConfig,
    lambda: &[f64],
    angle: f64,
    space: &GaussianSpace,
    bowl: &BowlProfile,
) -> Result<RunManifest, ExitFail> {
    let pcfg = PerturbConfig {
        epsilon: cfg.epsilon(),
        omega: (angle.cos(), angle.sin()),
        ell0: cfg.ell0,
        m1: cfg.m1,
    };
    let funnel = run_funnel(&cfg.peanut, lambda, &pcfg, &cfg.funnel, space).map_err(internal)?;
    let max_quotient = funnel.trace.max_quotient;
    let rep = classify_run(
        &cfg.peanut,
        lambda,
        &pcfg,
        &cfg.funnel,
        &cfg.classify,
        space,
        bowl,
    )
    .map_err(internal)?;
    Ok(RunManifest {
        config: cfg.clone(),
        angle,
        epsilon: pcfg.epsilon,
        class: rep.class,
        tau1: rep.tau1,
        exit_direction: rep.exit_direction,
        tau_event: rep.tau_event,
        lobe_survival_factor: rep.lobe_survival_factor,
        max_quotient,
        detail: rep.detail,
    })
}

fn cmd_run(cli: &Cli, angle: f64, epsilon_factor: Option<f64>) -> Result<(), ExitFail> {
    let root = output_root(cli);
    let (mut cfg, lambda) = load_archive(&root)?;
    if let Some(f) = epsilon_factor {
        cfg.epsilon_factor = f;
    }
    let space = GaussianSpace::standard();
    let bowl = solve_bowl_for(&cfg)?;
    let manifest = one_run(&cfg, &lambda, angle, &space, &bowl)?;

    let dir = root.join(format!("run_angle_{angle:+.6}"));
    fs::create_dir_all(&dir).map_err(|e| ExitFail::usage(e.to_string()))?;
    write_json(&dir.join("manifest.json"), &manifest)?;

    // funnel trace CSV for plotting
    let pcfg = PerturbConfig {
        epsilon: cfg.epsilon(),
        omega: (angle.cos(), angle.sin()),
        ell0: cfg.ell0,
        m1: cfg.m1,
    };
    let run = run_funnel(&cfg.peanut, &lambda, &pcfg, &cfg.funnel, &space).map_err(internal)?;
    let mut csv = String::from("tau,wu_norm,ws_norm,d0,d2,quotient,margin\n");
    for s in &run.trace.snaps {
        csv.push_str(&format!(
            "{:.6e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            s.tau, s.wu_norm, s.ws_norm, s.d0, s.d2, s.quotient, s.margin
        ));
    }
    fs::write(dir.join("funnel_trace.csv"), csv).map_err(|e| ExitFail::usage(e.to_string()))?;
    println!(
        "class = {:?} (tau1 = {:?}); manifest in {}",
        manifest.class,
        manifest.tau1,
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(cli: &Cli, n_angles: usize, classify: bool) -> Result<(), ExitFail> {
    let root = output_root(cli);
    let (cfg, lambda) = load_archive(&root)?;
    let space = GaussianSpace::standard();
    let bowl = solve_bowl_for(&cfg)?;

    let angles: Vec<f64> = (0..n_angles)
        .map(|i| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / n_angles as f64)
        .collect();

    let rows: Vec<Result<String, ExitFail>> = angles
        .par_iter()
        .map(|&angle| {
            let pcfg = PerturbConfig {
                epsilon: cfg.epsilon(),
                omega: (angle.cos(), angle.sin()),
                ell0: cfg.ell0,
                m1: cfg.m1,
            };
            let run =
                run_funnel(&cfg.peanut, &lambda, &pcfg, &cfg.funnel, &space).map_err(internal)?;
            let (tau1, d0, d2) = match (run.trace.tau1, run.trace.exit_direction) {
                (Some(t), Some(d)) => (t, d.0, d.1),
                _ => (f64::NAN, f64::NAN, f64::NAN),
            };
            let class = if classify {
                let rep = classify_run(
                    &cfg.peanut,
                    &lambda,
                    &pcfg,
                    &cfg.funnel,
                    &cfg.classify,
                    &space,
                    &bowl,
                )
                .map_err(internal)?;
                format!("{:?}", rep.class)
            } else {
                "-".to_string()
            };
            Ok(format!(
                "{:.12e},{angle:.12e},{tau1:.12e},{d0:.12e},{d2:.12e},{class}",
                cfg.epsilon()
            ))
        })
        .collect();

    let mut csv = String::from("epsilon,angle,tau1,d0,d2,class\n");
    for row in rows {
        csv.push_str(&row?);
        csv.push('\n');
    }
    fs::create_dir_all(&root).map_err(|e| ExitFail::usage(e.to_string()))?;
    let path = root.join("sweep.csv");
    fs::write(&path, csv).map_err(|e| ExitFail::usage(e.to_string()))?;
    println!("sweep written to {}", path.display());
    Ok(())
}

fn cmd_bisect(cli: &Cli, width: f64) -> Result<(), ExitFail> {
    let root = output_root(cli);
    let (cfg, lambda) = load_archive(&root)?;
    let space = GaussianSpace::standard();

    // the classes separate by the sign of the H2 exit component; bisect
    // it between the two dichotomy angles
    let d2_at = |angle: f64| -> Result<f64, ExitFail> {
        let pcfg = PerturbConfig {
            epsilon: cfg.epsilon(),
            omega: (angle.cos(), angle.sin()),
            ell0: cfg.ell0,
            m1: cfg.m1,
        };
        let run =
            run_funnel(&cfg.peanut, &lambda, &pcfg, &cfg.funnel, &space).map_err(internal)?;
        run.trace
            .exit_direction
            .map(|d| d.1)
            .ok_or_else(|| ExitFail::verification(format!("no exit at angle {angle}")))
    };

    let (mut lo, mut hi) = (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
    let mut d_lo = d2_at(lo)?;
    let d_hi = d2_at(hi)?;
    if d_lo.signum() == d_hi.signum() {
        return Err(ExitFail::verification(
            "no sign change of the exit H2 component between the dichotomy angles",
        ));
    }
    let mut iterations = 0;
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        let d = d2_at(mid)?;
        if d.signum() == d_lo.signum() {
            lo = mid;
            d_lo = d;
        } else {
            hi = mid;
        }
        iterations += 1;
        if iterations > 64 {
            break;
        }
    }
    #[derive(Serialize)]
    struct BisectReport {
        boundary_angle_lo: f64,
        boundary_angle_hi: f64,
        width: f64,
        iterations: usize,
    }
    let report = BisectReport {
        boundary_angle_lo: lo,
        boundary_angle_hi: hi,
        width: hi - lo,
        iterations,
    };
    fs::create_dir_all(&root).map_err(|e| ExitFail::usage(e.to_string()))?;
    write_json(&root.join("bisect.json"), &report)?;
    println!(
        "classification boundary in [{lo:.6}, {hi:.6}] (width {:.2e})",
        hi - lo
    );
    Ok(())
}

fn cmd_verify_barriers(cli: &Cli) -> Result<(), ExitFail> {
    let root = output_root(cli);
    let (cfg, lambda) = load_archive(&root)?;
    let space = GaussianSpace::standard();
    let bowl = solve_bowl_for(&cfg)?;

    // an actual neck-side exit fixes (ε₇, K̄0, τ1)
    let pcfg = PerturbConfig {
        epsilon: cfg.epsilon(),
        omega: (0.0, 1.0),
        ell0: cfg.ell0,
        m1: cfg.m1,
    };
    let run = run_funnel(&cfg.peanut, &lambda, &pcfg, &cfg.funnel, &space).map_err(internal)?;
    let tau1 = run
        .trace
        .tau1
        .ok_or_else(|| ExitFail::verification("no funnel exit for the barrier run"))?;
    let eps7 = 2.0 * cfg.peanut.cylinder() * cfg.m1 * (-tau1).exp();
    let k_bar = 2.0 * cfg.peanut.cylinder() * cfg.peanut.k0;

    let mut spec = BarrierSpec::new(eps7, k_bar, cfg.classify.ell1, cfg.peanut.dimension);
    spec.sigma_n = cfg.classify.sigma_n;
    let tau2 = spec.tau2();
    let plus = verify_supersolution_qplus(&spec, tau1, tau2, 200, 50, 1e-9);
    let barrier = assemble_q_minus(spec.clone(), &bowl, tau1).map_err(internal)?;
    let minus = verify_subsolution_qminus(&barrier, tau1, tau2, 200, 50, 1e-6).map_err(internal)?;

    let trace = neck_funnel_track(
        &cfg.peanut,
        eps7,
        k_bar,
        tau1,
        cfg.classify.sigma_n,
        0.0,
        cfg.m1,
        &run.grid,
        &space,
    )
    .map_err(internal)?;
    let trapping = barrier_trapping_check(
        &cfg.peanut,
        eps7,
        k_bar,
        tau1,
        trace.omega0_bar,
        cfg.classify.eta_bar,
        cfg.classify.sigma_n,
        &run.grid,
        &bowl,
    )
    .map_err(internal)?;
    let heights = height_bounds_at_tau2(
        eps7,
        k_bar,
        tau1,
        cfg.classify.sigma_n,
        cfg.peanut.dimension,
        &bowl,
    )
    .map_err(internal)?;

    // residual CSV (y, tau, residual, region) on a coarse grid
    let mut csv = String::from("y,tau,residual,region\n");
    for it in 0..=20 {
        let tau = tau1 + (tau2 - tau1) * it as f64 / 20.0;
        for iy in 0..=40 {
            let tf = mcflab::barriers::tip_quantities(tau, &spec);
            let y = spec.ell1 + (1.02 * tf.y0 - spec.ell1) * iy as f64 / 40.0;
            let q = mcflab::barriers::q_plus(y, tau, &spec);
            let nm1 = spec.nm1();
            if 2.0 * nm1 + q <= 0.0 {
                continue;
            }
            let qy = mcflab::barriers::q_plus_y(y, tau, &spec);
            let qyy = mcflab::barriers::q_plus_yy(y, tau, &spec);
            let qt = mcflab::barriers::q_plus_tau(y, tau, &spec);
            if let Some(r) = mcflab::barriers::residual_q(nm1, y, q, qy, qyy, qt) {
                csv.push_str(&format!("{y:.8e},{tau:.8e},{r:.8e},upper\n"));
            }
        }
    }
    fs::create_dir_all(&root).map_err(|e| ExitFail::usage(e.to_string()))?;
    fs::write(root.join("barrier_residuals.csv"), csv)
        .map_err(|e| ExitFail::usage(e.to_string()))?;

    #[derive(Serialize)]
    struct BarrierReport {
        tau1: f64,
        tau2: f64,
        eps7: f64,
        k_bar: f64,
        theta: f64,
        supersolution: mcflab::barriers::ResidualReport,
        subsolution: mcflab::barriers::ResidualReport,
        trapping: mcflab::experiment::classify::TrappingReport,
        height_lower: f64,
        height_upper: f64,
        omega0_bar: f64,
        reached_tau2: bool,
    }
    let ok = plus.pass
        && minus.pass
        && trapping.worst_below <= 1e-4
        && trapping.worst_above <= 1e-4
        && trace.reached_tau2;
    let report = BarrierReport {
        tau1,
        tau2,
        eps7,
        k_bar,
        theta: barrier.spec.theta,
        supersolution: plus,
        subsolution: minus,
        trapping,
        height_lower: heights.0,
        height_upper: heights.1,
        omega0_bar: trace.omega0_bar,
        reached_tau2: trace.reached_tau2,
    };
    write_json(&root.join("barrier_report.json"), &report)?;
    if ok {
        println!("barriers verified; report in {}", root.display());
        Ok(())
    } else {
        Err(ExitFail::verification(format!(
            "barrier verification failed: {}",
            serde_json::to_string(&report).unwrap_or_default()
        )))
    }
}

fn cmd_diagnostics(cli: &Cli) -> Result<(), ExitFail> {
    let root = output_root(cli);
    let (mut cfg, lambda) = load_archive(&root)?;
    let space = GaussianSpace::standard();

    cfg.funnel.store_fields = true;
    let pcfg = PerturbConfig {
        epsilon: cfg.epsilon(),
        omega: (0.0, 1.0),
        ell0: cfg.ell0,
        m1: cfg.m1,
    };
    let run = run_funnel(&cfg.peanut, &lambda, &pcfg, &cfg.funnel, &space).map_err(internal)?;
    let io_report = inner_outer_check(&cfg.peanut, cfg.ell0, cfg.m1, &run).map_err(internal)?;

    // translate-α: the perturbed boundary trace against the reference
    // one, maximized over the interior window where the reference table
    // covers every probe τ' ± ln 2
    let alpha = {
        let table = run.boundary_trace.clone();
        let (t0, _) = table[0];
        let t1 = table[table.len() - 1].0;
        let peanut_at = move |tau: f64| -> f64 {
            let idx = table
                .partition_point(|&(t, _)| t < tau)
                .clamp(1, table.len() - 1);
            let (ta, ua) = table[idx - 1];
            let (tb, ub) = table[idx];
            ua + (ub - ua) * (tau - ta) / (tb - ta).max(1e-300)
        };
        let ln2 = std::f64::consts::LN_2;
        let window: Vec<(f64, f64)> = run
            .perturbed_boundary_trace
            .iter()
            .cloned()
            .filter(|&(t, _)| t >= t0 + ln2 && t <= t1 - ln2)
            .collect();
        if window.is_empty() {
            0.0
        } else {
            peanut_translate_alpha(&peanut_at, &window).map_err(internal)?
        }
    };

    // mode ordering at τ2 via the tuned neck funnel
    let tau1 = run.trace.tau1.unwrap_or(cfg.peanut.tau0 + 8.0);
    let eps7 = 2.0 * cfg.peanut.cylinder() * cfg.m1 * (-tau1).exp();
    let k_bar = 2.0 * cfg.peanut.cylinder() * cfg.peanut.k0;
    let neck = neck_funnel_track(
        &cfg.peanut,
        eps7,
        k_bar,
        tau1,
        cfg.classify.sigma_n,
        0.0,
        cfg.m1,
        &run.grid,
        &space,
    )
    .map_err(internal)?;
    let last = *neck.series.last().unwrap();

    // ratio trend over four ε values on the convex side
    let mut trend = Vec::new();
    for factor in [1e-3, 3e-4, 1e-4, 3e-5] {
        let pc = PerturbConfig {
            epsilon: factor * (-cfg.peanut.tau0).exp(),
            omega: (0.0, -1.0),
            ell0: cfg.ell0,
            m1: cfg.m1,
        };
        let mut fo = cfg.funnel.clone();
        fo.store_fields = false;
        fo.horizon = 20.0;
        let r = run_funnel(&cfg.peanut, &lambda, &pc, &fo, &space).map_err(internal)?;
        let t1 = r.trace.tau1.unwrap_or(f64::NAN);
        // a ≈ tip abscissa scale, b ≈ √(2(n-1)): the ratio grows e^{τ/4}
        let k_out = 2.0 * cfg.peanut.cylinder() * cfg.peanut.k0;
        let a = (2.0 * (cfg.peanut.dimension as f64 - 1.0) / k_out).powf(0.25)
            * (t1 / 4.0).exp();
        let b = cfg.peanut.cylinder();
        trend.push((factor, t1, a / b));
    }

    #[derive(Serialize)]
    struct Diagnostics {
        inner_outer: mcflab::experiment::InnerOuterReport,
        translate_alpha: f64,
        neck_modes_at_tau2: (f64, f64, f64, f64, f64),
        neck_reached_tau2: bool,
        ratio_trend: Vec<(f64, f64, f64)>,
    }
    let report = Diagnostics {
        inner_outer: io_report,
        translate_alpha: alpha,
        neck_modes_at_tau2: last,
        neck_reached_tau2: neck.reached_tau2,
        ratio_trend: trend,
    };
    fs::create_dir_all(&root).map_err(|e| ExitFail::usage(e.to_string()))?;
    write_json(&root.join("diagnostics.json"), &report)?;
    println!("diagnostics written to {}", root.display());
    Ok(())
}

fn cmd_export(cli: &Cli) -> Result<(), ExitFail> {
    let root = output_root(cli);
    let (cfg, _lambda) = load_archive(&root)?;
    let bowl = solve_bowl_for(&cfg)?;
    let mut csv = Vec::new();
    bowl.write_csv(&mut csv, 2000).map_err(internal)?;
    fs::create_dir_all(&root).map_err(|e| ExitFail::usage(e.to_string()))?;
    fs::write(root.join("bowl.csv"), csv).map_err(|e| ExitFail::usage(e.to_string()))?;
    // the stored curve is already CSV; copy it next to the bowl
    let src = archive_path(&root).join("curve.csv");
    let dst = root.join("peanut_curve.csv");
    fs::copy(&src, &dst)
        .map_err(|_| ExitFail::missing(format!("no stored curve at {src:?}")))?;
    println!("exports written to {}", root.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::BuildPeanut => cmd_build_peanut(&cli),
        Command::Run {
            angle,
            epsilon_factor,
        } => cmd_run(&cli, *angle, *epsilon_factor),
        Command::Sweep { angles, classify } => cmd_sweep(&cli, *angles, *classify),
        Command::Bisect { width } => cmd_bisect(&cli, *width),
        Command::VerifyBarriers => cmd_verify_barriers(&cli),
        Command::Diagnostics => cmd_diagnostics(&cli),
        Command::Export => cmd_export(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(fail) => {
            let mut err = std::io::stderr();
            let _ = writeln!(err, "error: {}", fail.msg);
            ExitCode::from(fail.code)
        }
    }
}
