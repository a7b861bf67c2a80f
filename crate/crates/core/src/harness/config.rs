use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env_model::{CumulantProfile, EnvSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ThmMain1,
    ThmMain2,
    ThmWn,
    BahadurRao,
    Constants,
    Identities,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::ThmMain1 => "thm-main1",
            Experiment::ThmMain2 => "thm-main2",
            Experiment::ThmWn => "thm-wn",
            Experiment::BahadurRao => "bahadur-rao",
            Experiment::Constants => "constants",
            Experiment::Identities => "identities",
        }
    }
}

/// How the threshold `x` depends on the horizon `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum XRule {
    Fixed { x: f64 },
    EpsilonN { epsilon: f64 },
    NBeta { beta: f64 },
    /// `factor` times the lower end of the experiment's admissible window.
    WindowInterior { factor: f64 },
}

impl XRule {
    pub fn describe(&self) -> String {
        match self {
            XRule::Fixed { x } => format!("x={x}"),
            XRule::EpsilonN { epsilon } => format!("x=epsilon*n;epsilon={epsilon}"),
            XRule::NBeta { beta } => format!("x=n^beta;beta={beta}"),
            XRule::WindowInterior { factor } => format!("x=window_lo*{factor}"),
        }
    }
}

/// The unspecified sequences in the theorem windows: `M`,
/// `c_n = c_scale log n`, `b_n = b_scale v n`, `s_n = s_scale n / log n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowParams {
    pub m: f64,
    pub c_scale: f64,
    pub b_scale: f64,
    pub s_scale: f64,
}

impl Default for WindowParams {
    fn default() -> Self {
        Self { m: 3.0, c_scale: 1.0, b_scale: 0.5, s_scale: 1.0 }
    }
}

impl WindowParams {
    fn c_n(&self, n: f64) -> f64 {
        self.c_scale * n.ln()
    }

    /// Bounds of the `x`-window for deviations of the position below `vn`.
    pub fn gamma_main1(&self, p: &CumulantProfile, n: u64) -> (f64, f64) {
        let nf = n as f64;
        let lo = if p.alpha <= 2.0 {
            nf.powf(1.0 / p.alpha) * nf.ln().powf(self.m)
        } else {
            self.c_n(nf) * nf.sqrt() * nf.ln()
        };
        (lo, p.speed_v * nf - self.b_scale * p.speed_v * nf)
    }

    /// Bounds of the `x`-window for the sub-ballistic position.
    pub fn gamma_main2(&self, p: &CumulantProfile, n: u64) -> (f64, f64) {
        let nf = n as f64;
        (self.c_n(nf) * nf.ln(), nf.powf(p.alpha) / nf.ln().powf(self.m))
    }

    /// Bounds of the `x`-window for the total progeny; the upper end is
    /// `e^{s_n}`.
    pub fn lambda_wn(&self, p: &CumulantProfile, n: u64) -> (f64, f64) {
        let nf = n as f64;
        let lo = if p.alpha <= 2.0 {
            nf.powf(1.0 / p.alpha) * nf.ln().powf(self.m)
        } else {
            self.c_n(nf) * nf.sqrt() * nf.ln()
        };
        (lo, (self.s_scale * nf / nf.ln()).exp())
    }
}

/// Externally known constants used for comparison and for the
/// low-probability floor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnownConstants {
    pub c_alpha: Option<f64>,
    pub c_alpha_se: f64,
    pub c1: Option<f64>,
    pub c1_se: f64,
    pub c2: Option<f64>,
}

fn default_delta() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub seed: u64,
    pub replicas: u64,
    pub experiment: Experiment,
    #[serde(default)]
    pub n_grid: Vec<u64>,
    #[serde(default)]
    pub x_rule: Option<XRule>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// `ρ` values for the product large-deviation experiment.
    #[serde(default)]
    pub rho_grid: Vec<f64>,
    /// Plain Monte Carlo replicas for the product tail cross-check
    /// (default `10 · replicas`).
    #[serde(default)]
    pub plain_replicas: Option<u64>,
    #[serde(default)]
    pub window: WindowParams,
    #[serde(default)]
    pub constants: Option<KnownConstants>,
    /// Cycle-sum thresholds for the tail-plateau route.
    #[serde(default)]
    pub x_grid: Vec<f64>,
    /// First-passage levels for the conditional-moment route.
    #[serde(default)]
    pub t_grid: Vec<f64>,
    /// `x` fixing the deviation window of the block identities.
    #[serde(default)]
    pub identity_x: Option<f64>,
    /// Walk step cap for runs to a level.
    #[serde(default = "default_step_cap")]
    pub step_cap: u64,
}

fn default_step_cap() -> u64 {
    crate::walk_sim::DEFAULT_STEP_CAP
}

impl ExperimentConfig {
    pub fn new(env: EnvSpec, experiment: Experiment, seed: u64, replicas: u64) -> Self {
        Self {
            env,
            seed,
            replicas,
            experiment,
            n_grid: Vec::new(),
            x_rule: None,
            delta: default_delta(),
            output: None,
            rho_grid: Vec::new(),
            plain_replicas: None,
            window: WindowParams::default(),
            constants: None,
            x_grid: Vec::new(),
            t_grid: Vec::new(),
            identity_x: None,
            step_cap: default_step_cap(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that do not depend on the environment's profile.
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(Error::Config(format!("delta must lie in (0, 1/2), got {}", self.delta)));
        }
        let needs_n = !matches!(self.experiment, Experiment::Constants);
        if needs_n && self.n_grid.is_empty() {
            return Err(Error::Config("n_grid must be nonempty".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid.contains(&0) {
            return Err(Error::Config("n_grid must be positive and strictly increasing".into()));
        }
        for (name, g) in [("rho_grid", &self.rho_grid), ("x_grid", &self.x_grid), ("t_grid", &self.t_grid)] {
            if g.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Config(format!("{name} must be strictly increasing")));
            }
        }
        match self.experiment {
            Experiment::ThmMain1 | Experiment::ThmMain2 | Experiment::ThmWn if self.x_rule.is_none() => {
                Err(Error::Config(format!("{} needs an x_rule", self.experiment.as_str())))
            }
            Experiment::BahadurRao if self.rho_grid.is_empty() => {
                Err(Error::Config("bahadur-rao needs a nonempty rho_grid".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn known(&self) -> KnownConstants {
        self.constants.unwrap_or_default()
    }
}
