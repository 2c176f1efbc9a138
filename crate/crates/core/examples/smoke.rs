use std::time::Instant;
use mcflab::experiment::classify::{classify_run, ClassifyOpts};
use mcflab::experiment::{FunnelOpts, PerturbConfig};
use mcflab::bowl::solve_bowl;
use mcflab::hermite::GaussianSpace;
use mcflab::peanut::{shoot_lambda, PeanutParams, ShootOpts};

fn main() {
    let t0 = Instant::now();
    let params = PeanutParams::defaults_for(4.0, 4.0);
    let space = GaussianSpace::standard();
    let bowl = solve_bowl(3, 120.0, 0.004).unwrap();
    let mut trace = Vec::new();
    let shot = shoot_lambda(&params, &ShootOpts::default(), &space, &mut trace).unwrap();
    eprintln!("[{:?}] shot: lambda = {:?}, status = {:?}", t0.elapsed(), shot.lambda, shot.status);
    let eps = 1e-3 * (-params.tau0).exp();
    for angle in [-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2] {
        let t1 = Instant::now();
        let cfg = PerturbConfig::from_angle(eps, angle, 4.0, params.k0);
        match classify_run(&params, &shot.lambda, &cfg, &FunnelOpts::default(), &ClassifyOpts::default(), &space, &bowl) {
            Ok(rep) => eprintln!("[{:?}] angle {angle:+.3}: {:?} | tau1 {:?} | event {:?} | {}", t1.elapsed(), rep.class, rep.tau1, rep.tau_event, rep.detail),
            Err(e) => eprintln!("[{:?}] angle {angle:+.3}: ERR {e}", t1.elapsed()),
        }
    }
    eprintln!("total {:?}", t0.elapsed());
}
