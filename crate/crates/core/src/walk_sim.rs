//! Quenched nearest-neighbour walk on ℤ.
//!
//! The environment is realised lazily: a site's `ω` is drawn the first time
//! the walk needs it and is never resampled. The walk keeps counters only
//! (position, left-step counts per site), never the path.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env_model::{EnvSampler, EnvSpec};
use crate::error::{Error, Result};
use crate::rng::{role, RngStream};

pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;

/// A fixed environment realised on a growing window `[lo, hi]` around 0.
#[derive(Debug, Clone)]
pub struct QuenchedEnv {
    sampler: EnvSampler,
    rng: ChaCha8Rng,
    /// `ω_i` for `i = 0, 1, ...`
    right: Vec<f64>,
    /// `ω_{-1-k}` for `k = 0, 1, ...`
    left: Vec<f64>,
}

impl QuenchedEnv {
    pub fn new(spec: &EnvSpec, stream: RngStream) -> Result<Self> {
        spec.ensure_transient()?;
        Ok(Self {
            sampler: spec.sampler(),
            rng: stream.rng(),
            right: Vec::new(),
            left: Vec::new(),
        })
    }

    #[inline]
    pub fn omega(&mut self, site: i64) -> f64 {
        if site >= 0 {
            let i = site as usize;
            while self.right.len() <= i {
                let s = self.sampler.sample(&mut self.rng);
                self.right.push(s.omega);
            }
            self.right[i]
        } else {
            let k = (-1 - site) as usize;
            while self.left.len() <= k {
                let s = self.sampler.sample(&mut self.rng);
                self.left.push(s.omega);
            }
            self.left[k]
        }
    }

    /// Realised window `[lo, hi]`, or `None` before any site was drawn.
    pub fn realized_range(&self) -> Option<(i64, i64)> {
        if self.right.is_empty() && self.left.is_empty() {
            return None;
        }
        let lo = -(self.left.len() as i64);
        let hi = self.right.len() as i64 - 1;
        Some((lo, hi.max(lo)))
    }
}

/// Outcome of one run to the first visit of `n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawHitRecord", into = "RawHitRecord")]
pub struct HitRecord {
    pub n: u64,
    pub t_n: u64,
    /// `(i, U_i^n)` for every site with at least one step `i → i-1`, by site.
    pub u: Vec<(i64, u64)>,
    pub min_site: i64,
    pub steps_left_total: u64,
}

#[derive(Serialize, Deserialize)]
struct RawHitRecord {
    n: u64,
    #[serde(rename = "T_n")]
    t_n: u64,
    #[serde(rename = "U")]
    u: Vec<(i64, u64)>,
}

impl From<HitRecord> for RawHitRecord {
    fn from(h: HitRecord) -> Self {
        RawHitRecord { n: h.n, t_n: h.t_n, u: h.u }
    }
}

impl TryFrom<RawHitRecord> for HitRecord {
    type Error = String;

    fn try_from(raw: RawHitRecord) -> std::result::Result<Self, String> {
        let steps_left_total = raw.u.iter().map(|(_, c)| c).sum();
        // the leftmost site is reached by a left step from one site above it
        let min_site = raw.u.iter().map(|(i, _)| i - 1).min().unwrap_or(0).min(0);
        let rec = HitRecord { n: raw.n, t_n: raw.t_n, u: raw.u, min_site, steps_left_total };
        if rec.bookkeeping_residual() != 0 {
            return Err("T_n != n + 2 sum U".into());
        }
        Ok(rec)
    }
}

impl HitRecord {
    /// `T_n - n - 2 Σ U_i^n`, zero for every valid record.
    pub fn bookkeeping_residual(&self) -> i128 {
        let sum: i128 = self.u.iter().map(|(_, c)| *c as i128).sum();
        self.t_n as i128 - self.n as i128 - 2 * sum
    }
}

/// Run from 0 until the first visit to `n`, with the default step cap.
pub fn run_until_hit(env: &mut QuenchedEnv, n: u64, stream: RngStream) -> Result<HitRecord> {
    run_until_hit_capped(env, n, stream, DEFAULT_STEP_CAP)
}

pub fn run_until_hit_capped(
    env: &mut QuenchedEnv,
    n: u64,
    stream: RngStream,
    cap: u64,
) -> Result<HitRecord> {
    let mut rng = stream.rng();
    let target = n as i64;
    // left-step counters for sites [0, n) and (-inf, -1]
    let mut right_counts = vec![0u64; n as usize];
    let mut left_counts: Vec<u64> = Vec::new();
    let mut x: i64 = 0;
    let mut steps: u64 = 0;
    let mut min_site: i64 = 0;
    while x < target {
        if steps >= cap {
            return Err(Error::HorizonExceeded { cap });
        }
        let w = env.omega(x);
        steps += 1;
        if rng.random::<f64>() < w {
            x += 1;
        } else {
            if x >= 0 {
                right_counts[x as usize] += 1;
            } else {
                let k = (-1 - x) as usize;
                if left_counts.len() <= k {
                    left_counts.resize(k + 1, 0);
                }
                left_counts[k] += 1;
            }
            x -= 1;
            min_site = min_site.min(x);
        }
    }
    let mut u: Vec<(i64, u64)> = Vec::new();
    for (k, &c) in left_counts.iter().enumerate().rev() {
        if c > 0 {
            u.push((-1 - k as i64, c));
        }
    }
    for (i, &c) in right_counts.iter().enumerate() {
        if c > 0 {
            u.push((i as i64, c));
        }
    }
    let steps_left_total = u.iter().map(|(_, c)| c).sum();
    Ok(HitRecord { n, t_n: steps, u, min_site, steps_left_total })
}

/// Position `X_steps` of the walk started at 0.
pub fn position_after(env: &mut QuenchedEnv, steps: u64, stream: RngStream) -> i64 {
    let mut rng = stream.rng();
    let mut x: i64 = 0;
    for _ in 0..steps {
        let w = env.omega(x);
        if rng.random::<f64>() < w {
            x += 1;
        } else {
            x -= 1;
        }
    }
    x
}

/// Deepest excursion below `j` after the first visit to `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcursionStat {
    pub j: i64,
    /// `max_{i ≥ T_j} (j - X_i)` over the observed horizon.
    pub l_j: u64,
    pub horizon: u64,
    pub min_site: i64,
}

pub fn longest_excursion(
    env: &mut QuenchedEnv,
    j: i64,
    horizon: u64,
    stream: RngStream,
) -> Result<ExcursionStat> {
    if j < 1 {
        return Err(Error::Config(format!("excursion site must be >= 1, got {j}")));
    }
    let mut rng = stream.rng();
    let mut x: i64 = 0;
    let mut min_site = 0;
    let mut steps = 0u64;
    while x < j {
        if steps >= DEFAULT_STEP_CAP {
            return Err(Error::HorizonExceeded { cap: DEFAULT_STEP_CAP });
        }
        steps += 1;
        if rng.random::<f64>() < env.omega(x) {
            x += 1;
        } else {
            x -= 1;
            min_site = min_site.min(x);
        }
    }
    let mut depth = 0i64;
    for _ in 0..horizon {
        if rng.random::<f64>() < env.omega(x) {
            x += 1;
        } else {
            x -= 1;
            min_site = min_site.min(x);
            depth = depth.max(j - x);
        }
    }
    Ok(ExcursionStat { j, l_j: depth as u64, horizon, min_site })
}

/// Annealed replica: fresh environment and walk streams derived from `replica`.
pub fn annealed_env(spec: &EnvSpec, replica: RngStream) -> Result<(QuenchedEnv, RngStream)> {
    let env = QuenchedEnv::new(spec, replica.substream(role::ENV))?;
    Ok((env, replica.substream(role::WALK)))
}
