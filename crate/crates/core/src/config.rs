//! Run configuration: one serializable bag with a default for every
//! field, so a config file can pin any subset and round-trip unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::classify::ClassifyOpts;
use crate::experiment::FunnelOpts;
use crate::peanut::{PeanutParams, ShootOpts};

fn default_ell0() -> f64 {
    4.0
}
fn default_l_factor() -> f64 {
    4.0
}
fn default_epsilon_factor() -> f64 {
    1e-3
}
fn default_bowl_zmax() -> f64 {
    120.0
}
fn default_bowl_h() -> f64 {
    0.004
}
fn default_curve_nodes() -> usize {
    800
}
fn default_true() -> bool {
    true
}

impl Default for ClassifyOpts {
    fn default() -> Self {
        ClassifyOpts {
            convexity_horizon: 3.0,
            pinch_overrun: 10.0,
            pinch_tol: 0.05,
            ball_lookback: 0.15,
            eta_bar: 0.25,
            sigma_n: 20.0,
            ell1: 8.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub peanut: PeanutParams,
    /// perturbation support scale ℓ0
    pub ell0: f64,
    /// L(τ0) = l_factor·ℓ0 fixes τ0 when the config does not pin it
    pub l_factor: f64,
    /// ε = epsilon_factor·e^{-τ0}
    pub epsilon_factor: f64,
    /// funnel constant; the classifier's convexity argument wants
    /// 24·K0 + 1
    pub m1: f64,
    pub shoot: ShootOpts,
    pub funnel: FunnelOpts,
    pub classify: ClassifyOpts,
    pub bowl_z_max: f64,
    pub bowl_h: f64,
    pub curve_nodes: usize,
    /// schema marker: every run is wall-clock- and randomness-free
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ell0 = default_ell0();
        let peanut = PeanutParams::defaults_for(ell0, default_l_factor());
        let m1 = 24.0 * peanut.k0 + 1.0;
        RunConfig {
            peanut,
            ell0,
            l_factor: default_l_factor(),
            epsilon_factor: default_epsilon_factor(),
            m1,
            shoot: ShootOpts::default(),
            funnel: FunnelOpts::default(),
            classify: ClassifyOpts::default(),
            bowl_z_max: default_bowl_zmax(),
            bowl_h: default_bowl_h(),
            curve_nodes: default_curve_nodes(),
            deterministic: default_true(),
        }
    }
}

impl RunConfig {
    pub fn epsilon(&self) -> f64 {
        self.epsilon_factor * (-self.peanut.tau0).exp()
    }

    pub fn validate(&self) -> Result<()> {
        self.peanut.validate()?;
        if !(self.ell0 > 0.0 && self.epsilon_factor > 0.0) {
            return Err(Error::domain("ell0 and epsilon_factor must be positive"));
        }
        if self.m1 <= 24.0 * self.peanut.k0 {
            return Err(Error::domain("m1 must exceed 24·K0"));
        }
        if 2.0 * self.ell0 >= self.peanut.parabolic_scale(self.peanut.tau0) {
            return Err(Error::domain("2ℓ0 must sit inside L(τ0)"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_json().unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        let again = back.to_json().unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn partial_configs_pick_up_defaults() {
        let cfg = RunConfig::from_json(r#"{"ell0": 5.0}"#).unwrap();
        assert_eq!(cfg.ell0, 5.0);
        assert_eq!(cfg.curve_nodes, 800);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(RunConfig::from_json(r#"{"peanut": {"m": 4, "dimension": 3, "k0": 1.0, "rho": 0.25, "delta": -1.0, "ell_int": 5.0, "tau0": 16.6, "tip_a": 0.35, "tip_c1": 10.0}}"#).is_err());
    }
}
