//! Experiment configuration, drivers and reports.

pub mod config;
pub mod identities;
pub mod report;
pub mod theorems;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constants::{
    c1_from, compose_constants, enu_from_cycles, estimate_c3_conditional, estimate_c3_tail, hill_diagnostic,
    sample_cycles, write_constants_csv, TailEstimate,
};
use crate::env_model::{deviation_window, CumulantProfile, DeviationWindow, EnvSpec};
use crate::error::Result;
use crate::perpetuity::kesten_c2;
use crate::rng::RngStream;

pub use config::{Experiment, ExperimentConfig, KnownConstants, WindowParams, XRule};
pub use identities::run_identities;
pub use report::{ExperimentReport, ReportRow};
pub use theorems::{run_bahadur_rao, run_thm_main1, run_thm_main2, run_thm_wn};

pub const DEFAULT_X_GRID: [f64; 6] = [40.0, 60.0, 80.0, 100.0, 140.0, 200.0];
pub const DEFAULT_T_GRID: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
pub const DEFAULT_HILL_FRACTION: f64 = 1e-3;
/// Truncation tolerance for `Ỹ_∞` draws.
pub const PERPETUITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub estimates: Vec<TailEstimate>,
    pub summary: std::collections::BTreeMap<String, f64>,
    pub checks: std::collections::BTreeMap<String, bool>,
    pub notes: Vec<String>,
}

impl ConstantsReport {
    pub fn get(&self, quantity: &str, method: crate::constants::Method) -> Option<&TailEstimate> {
        self.estimates.iter().find(|e| e.quantity == quantity && e.method == method)
    }
}

/// `C₂`, `Eν`, `C₃` by both routes, `C₁`, `C(α)` and the Hill index, all
/// from one sample of `replicas` regeneration cycles.
pub fn run_constants(cfg: &ExperimentConfig, workers: usize) -> Result<ConstantsReport> {
    use crate::constants::Method;
    cfg.validate()?;
    let env = &cfg.env;
    let profile = env.profile()?;
    let alpha = profile.alpha;
    let root = RngStream::new(cfg.seed, 0);
    let mut notes = Vec::new();
    if profile.arithmetic_flag {
        notes.push("log A is arithmetic: the tail constants are not well defined".into());
    }
    let c2 = match cfg.known().c2 {
        Some(v) => TailEstimate::exact("C2", v),
        None => {
            let k = kesten_c2(env, cfg.replicas, PERPETUITY_TOL, root.substream(1), workers)?;
            TailEstimate {
                quantity: "C2".into(),
                estimate: k.estimate,
                se: k.se,
                replicas: k.replicas,
                method: Method::MonteCarlo,
                grid: vec![],
                curve: vec![],
                flags: vec![format!("truncation={}", k.truncation)],
            }
        }
    };
    let cycles = sample_cycles(env, cfg.replicas, root.substream(2), workers)?;
    let enu = enu_from_cycles(&cycles);
    let x_grid = if cfg.x_grid.is_empty() { DEFAULT_X_GRID.to_vec() } else { cfg.x_grid.clone() };
    let t_grid = if cfg.t_grid.is_empty() { DEFAULT_T_GRID.to_vec() } else { cfg.t_grid.clone() };
    let tail = estimate_c3_tail(env, alpha, &x_grid, &cycles)?;
    let cond = estimate_c3_conditional(env, alpha, &c2, &t_grid, &cycles)?;
    let z = tail.z_distance(&cond);
    let c1 = c1_from(&cond, &enu);
    let composed = compose_constants(&profile, &c1)?;

    let mut summary = std::collections::BTreeMap::new();
    let mut checks = std::collections::BTreeMap::new();
    summary.insert("c3_route_z".into(), z);
    checks.insert("c3_route_agreement".into(), z < 2.0);
    let mut estimates = vec![c2, enu, tail, cond, composed.c1, composed.c_alpha];
    let sums: Vec<f64> = cycles.iter().map(|c| c.sum() as f64).collect();
    match hill_diagnostic(&sums, DEFAULT_HILL_FRACTION) {
        Ok(h) => {
            summary.insert("hill_z".into(), (h.estimate - alpha).abs() / h.se);
            estimates.push(h);
        }
        Err(e) => notes.push(format!("hill diagnostic unavailable: {e}")),
    }
    Ok(ConstantsReport { estimates, summary, checks, notes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvAnalysis {
    pub env: EnvSpec,
    pub profile: CumulantProfile,
    /// `Λ*(ρ0) - αρ0`, zero up to rounding.
    pub legendre_residual: f64,
    pub window: Option<DeviationWindow>,
    pub x: Option<f64>,
}

pub fn analyze_env(env: &EnvSpec, x: Option<f64>, delta: f64) -> Result<EnvAnalysis> {
    let profile = env.profile()?;
    let legendre_residual = env.legendre(profile.rho0)? - profile.alpha * profile.rho0;
    let window = x.map(|x| deviation_window(&profile, x, delta)).transpose()?;
    Ok(EnvAnalysis { env: env.clone(), profile, legendre_residual, window, x })
}

/// Result of any experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Report(ExperimentReport),
    Constants(ConstantsReport),
}

impl Outcome {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        match self {
            Outcome::Report(r) => r.write_csv(out),
            Outcome::Constants(c) => write_constants_csv(&c.estimates, out),
        }
    }

    pub fn checks(&self) -> &std::collections::BTreeMap<String, bool> {
        match self {
            Outcome::Report(r) => &r.checks,
            Outcome::Constants(c) => &c.checks,
        }
    }

    pub fn notes(&self) -> &[String] {
        match self {
            Outcome::Report(r) => &r.notes,
            Outcome::Constants(c) => &c.notes,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(match self {
            Outcome::Report(r) => serde_json::to_string_pretty(r)?,
            Outcome::Constants(c) => serde_json::to_string_pretty(c)?,
        })
    }
}

pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<Outcome> {
    Ok(match cfg.experiment {
        Experiment::ThmMain1 => Outcome::Report(run_thm_main1(cfg, workers)?),
        Experiment::ThmMain2 => Outcome::Report(run_thm_main2(cfg, workers)?),
        Experiment::ThmWn => Outcome::Report(run_thm_wn(cfg, workers)?),
        Experiment::BahadurRao => Outcome::Report(run_bahadur_rao(cfg, workers)?),
        Experiment::Identities => Outcome::Report(run_identities(cfg, workers)?),
        Experiment::Constants => Outcome::Constants(run_constants(cfg, workers)?),
    })
}
