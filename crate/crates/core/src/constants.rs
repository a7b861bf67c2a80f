//! Estimators for the constants in the tail asymptotics of the total progeny:
//! the mean regeneration time `Eν`, the cycle-sum tail constant `C₃` (two
//! independent routes), `C₁ = C₃ / Eν`, and `C(α)`; plus a Hill tail-index
//! diagnostic.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::branching::{first_passage_tau, Cycle, RegenerativeChain};
use crate::env_model::{CumulantProfile, EnvSpec};
use crate::error::{Error, Result};
use crate::parallel::{map_replicas, reduce_replicas};
use crate::rng::RngStream;
use crate::stats::MeanAcc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MonteCarlo,
    EmpiricalTailPlateau,
    ConditionalMoment,
    Hill,
    Composed,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::MonteCarlo => "monte-carlo",
            Method::EmpiricalTailPlateau => "empirical-tail-plateau",
            Method::ConditionalMoment => "conditional-moment",
            Method::Hill => "hill",
            Method::Composed => "composed",
        }
    }
}

/// A point on an audit curve: grid value, estimate, standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub at: f64,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub quantity: String,
    pub estimate: f64,
    pub se: f64,
    pub replicas: u64,
    pub method: Method,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub curve: Vec<CurvePoint>,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl TailEstimate {
    fn new(quantity: &str, estimate: f64, se: f64, replicas: u64, method: Method) -> Self {
        Self {
            quantity: quantity.into(),
            estimate,
            se,
            replicas,
            method,
            grid: Vec::new(),
            curve: Vec::new(),
            flags: Vec::new(),
        }
    }

    /// Known value with zero uncertainty, e.g. a closed-form `C₂`.
    pub fn exact(quantity: &str, value: f64) -> Self {
        Self::new(quantity, value, 0.0, 0, Method::Composed)
    }

    /// `|a - b| / sqrt(se_a² + se_b²)`.
    pub fn z_distance(&self, other: &TailEstimate) -> f64 {
        (self.estimate - other.estimate).abs() / self.se.hypot(other.se)
    }

    fn flag_arithmetic(mut self, spec: &EnvSpec) -> Self {
        if spec.is_arithmetic() {
            self.flags.push("arithmetic".into());
        }
        self
    }
}

/// `r` iid regeneration cycles, cycle `i` driven by replica stream `i`.
pub fn sample_cycles(spec: &EnvSpec, replicas: u64, stream: RngStream, workers: usize) -> Result<Vec<Cycle>> {
    spec.ensure_transient()?;
    map_replicas(workers, replicas, |r| RegenerativeChain::new(spec, stream.replica(r))?.next_cycle())
}

pub fn estimate_enu(spec: &EnvSpec, replicas: u64, stream: RngStream, workers: usize) -> Result<TailEstimate> {
    spec.ensure_transient()?;
    let acc = reduce_replicas(
        workers,
        replicas,
        MeanAcc::default,
        |acc, r| {
            let c = RegenerativeChain::new(spec, stream.replica(r))?.next_cycle()?;
            acc.push(c.len() as f64);
            Ok(())
        },
        MeanAcc::merge,
    )?;
    Ok(TailEstimate::new("E_nu", acc.mean(), acc.se(), replicas, Method::MonteCarlo))
}

/// `Eν` from an existing cycle sample.
pub fn enu_from_cycles(cycles: &[Cycle]) -> TailEstimate {
    let acc: MeanAcc = cycles.iter().map(|c| c.len() as f64).collect();
    TailEstimate::new("E_nu", acc.mean(), acc.se(), cycles.len() as u64, Method::MonteCarlo)
}

/// Cycle sums that must exceed the largest grid point.
pub const MIN_TOP_HITS: usize = 10;

/// Plateau ratio above which the tail grid is rejected.
pub const PLATEAU_LIMIT: f64 = 2.0;

/// `C₃` as the grid average of `x^α P̂(S_ν > x)`, `S_ν = Σ_{k<ν} Z_k`. The
/// SE is that of the per-cycle average over the grid, so correlation between
/// grid points is accounted for.
pub fn estimate_c3_tail(spec: &EnvSpec, alpha: f64, x_grid: &[f64], cycles: &[Cycle]) -> Result<TailEstimate> {
    check_grid(x_grid)?;
    let sums: Vec<f64> = cycles.iter().map(|c| c.sum() as f64).collect();
    let x_max = *x_grid.last().expect("checked");
    let top_hits = sums.iter().filter(|&&s| s > x_max).count();
    if top_hits < MIN_TOP_HITS {
        return Err(Error::TooFewSamples(format!(
            "{top_hits} of {} cycle sums exceed the largest threshold {x_max}",
            sums.len()
        )));
    }
    let g = x_grid.len() as f64;
    let scales: Vec<f64> = x_grid.iter().map(|x| x.powf(alpha)).collect();
    let acc: MeanAcc = sums
        .iter()
        .map(|&s| x_grid.iter().zip(&scales).filter(|(&x, _)| s > x).map(|(_, w)| w).sum::<f64>() / g)
        .collect();
    let curve = empirical_tail(&sums, x_grid)
        .into_iter()
        .zip(&scales)
        .map(|(((x, p), se), w)| CurvePoint { at: x, value: p * w, se: se * w })
        .collect::<Vec<_>>();
    let hi = curve.iter().map(|c| c.value).fold(f64::MIN, f64::max);
    let lo = curve.iter().map(|c| c.value).fold(f64::MAX, f64::min);
    let ratio = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if ratio > PLATEAU_LIMIT {
        return Err(Error::GridUnstable { ratio });
    }
    let mut est = TailEstimate::new("C3", acc.mean(), acc.se(), cycles.len() as u64, Method::EmpiricalTailPlateau);
    est.grid = x_grid.to_vec();
    est.curve = curve;
    est.flags.push(format!("plateau_ratio={ratio:.4}"));
    Ok(est.flag_arithmetic(spec))
}

/// `(x, P̂(S > x), SE)` per grid point.
pub fn empirical_tail(samples: &[f64], x_grid: &[f64]) -> Vec<((f64, f64), f64)> {
    let n = samples.len() as u64;
    x_grid
        .iter()
        .map(|&x| {
            let hits = samples.iter().filter(|&&s| s > x).count() as u64;
            let (p, se) = crate::stats::proportion(hits, n);
            ((x, p), se)
        })
        .collect()
}

/// Relative change between `t_max` and `t_max / 2` that counts as stabilised.
pub const STABILIZATION: f64 = 0.10;

/// `C₃ = C₂ · lim_t E[Z_{τ_t}^α 1{τ_t < ν}]`.
///
/// The conditional moment `E[Z_{τ_t}^α | τ_t < ν]` itself grows like `t^α`;
/// it is the product with `P(τ_t < ν) ~ t^{-α}` that has a finite limit, so
/// the curve holds the joint moment. The limit is taken at the largest `t`
/// whose value differs from the value at (the grid point nearest) `t/2` by
/// less than [`STABILIZATION`].
pub fn estimate_c3_conditional(
    spec: &EnvSpec,
    alpha: f64,
    c2: &TailEstimate,
    t_grid: &[f64],
    cycles: &[Cycle],
) -> Result<TailEstimate> {
    check_grid(t_grid)?;
    let curve = joint_overshoot_curve(alpha, t_grid, cycles);
    let mut best_change = f64::INFINITY;
    let mut chosen = None;
    for i in (1..curve.len()).rev() {
        let half = curve[i].at / 2.0;
        let j = (0..i)
            .min_by(|&a, &b| (curve[a].at - half).abs().total_cmp(&(curve[b].at - half).abs()))
            .expect("nonempty");
        let change = (curve[i].value - curve[j].value).abs() / curve[i].value;
        if change < STABILIZATION {
            chosen = Some(i);
            break;
        }
        if change < best_change {
            best_change = change;
        }
    }
    let Some(i) = chosen else {
        return Err(Error::NotStabilized { change: best_change });
    };
    let v = curve[i];
    let estimate = c2.estimate * v.value;
    let se = (c2.estimate * v.se).hypot(v.value * c2.se);
    let mut est = TailEstimate::new("C3", estimate, se, cycles.len() as u64, Method::ConditionalMoment);
    est.grid = t_grid.to_vec();
    est.curve = curve;
    est.flags.push(format!("t_limit={}", v.at));
    Ok(est.flag_arithmetic(spec))
}

/// `E[Z_{τ_t}^α 1{τ_t < ν}]` over the grid, one cycle per replica.
pub fn joint_overshoot_curve(alpha: f64, t_grid: &[f64], cycles: &[Cycle]) -> Vec<CurvePoint> {
    t_grid
        .iter()
        .map(|&t| {
            let acc: MeanAcc = cycles.iter().map(|c| overshoot_power(c, t, alpha).unwrap_or(0.0)).collect();
            CurvePoint { at: t, value: acc.mean(), se: acc.se() }
        })
        .collect()
}

/// `E[Z_{τ_t}^α | τ_t < ν]` and the number of cycles with `τ_t < ν`.
pub fn conditional_overshoot_moment(alpha: f64, t: f64, cycles: &[Cycle]) -> (CurvePoint, u64) {
    let acc: MeanAcc = cycles.iter().filter_map(|c| overshoot_power(c, t, alpha)).collect();
    (CurvePoint { at: t, value: acc.mean(), se: acc.se() }, acc.n)
}

fn overshoot_power(c: &Cycle, t: f64, alpha: f64) -> Option<f64> {
    // integer threshold: Z > t  iff  Z > floor(t)
    let tau = first_passage_tau(&c.path, t.floor() as u64)?;
    Some((c.path[tau] as f64).powf(alpha))
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) || grid.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Config("grid must be nonempty, positive and increasing".into()));
    }
    Ok(())
}

/// `C₁ = C₃ / Eν` with delta-method SE.
pub fn c1_from(c3: &TailEstimate, enu: &TailEstimate) -> TailEstimate {
    let est = c3.estimate / enu.estimate;
    let se = (c3.se / enu.estimate).hypot(c3.estimate * enu.se / (enu.estimate * enu.estimate));
    let mut out = TailEstimate::new("C1", est, se, c3.replicas.min(enu.replicas), Method::Composed);
    out.flags = c3.flags.clone();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedConstants {
    pub c1: TailEstimate,
    pub c_alpha: TailEstimate,
}

/// `C(α) = (2v)^α C₁` for `α > 1`, `C(α) = C₁` otherwise.
pub fn compose_constants(profile: &CumulantProfile, c1: &TailEstimate) -> Result<ComposedConstants> {
    let factor = if profile.alpha > 1.0 {
        if !(profile.speed_v > 0.0) {
            return Err(Error::RegimeMismatch(format!(
                "alpha = {} > 1 but the speed is {}",
                profile.alpha, profile.speed_v
            )));
        }
        (2.0 * profile.speed_v).powf(profile.alpha)
    } else {
        1.0
    };
    let mut c_alpha = c1.clone();
    c_alpha.quantity = "C_alpha".into();
    c_alpha.method = Method::Composed;
    c_alpha.estimate = factor * c1.estimate;
    c_alpha.se = factor * c1.se;
    Ok(ComposedConstants { c1: c1.clone(), c_alpha })
}

pub const HILL_MIN_SAMPLES: usize = 1000;

/// Hill estimate of the tail index from the top `k_fraction` order
/// statistics; SE is `α̂ / √k`.
pub fn hill_diagnostic(samples: &[f64], k_fraction: f64) -> Result<TailEstimate> {
    if !(k_fraction > 0.0 && k_fraction <= 0.1) {
        return Err(Error::Config(format!("k_fraction must lie in (0, 0.1], got {k_fraction}")));
    }
    if samples.len() < HILL_MIN_SAMPLES {
        return Err(Error::TooFewSamples(format!("{} < {HILL_MIN_SAMPLES}", samples.len())));
    }
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let k = ((samples.len() as f64 * k_fraction).floor() as usize).max(1);
    let threshold = sorted[k];
    if !(threshold > 0.0) {
        return Err(Error::TooFewSamples("order statistic at k is not positive".into()));
    }
    let gamma = sorted[..k].iter().map(|x| (x / threshold).ln()).sum::<f64>() / k as f64;
    if !(gamma > 0.0) {
        return Err(Error::TooFewSamples("degenerate upper tail".into()));
    }
    let alpha = 1.0 / gamma;
    let mut out = TailEstimate::new("tail_index", alpha, alpha / (k as f64).sqrt(), samples.len() as u64, Method::Hill);
    out.grid = vec![threshold];
    Ok(out)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    quantity: &'a str,
    method: &'static str,
    estimate: f64,
    se: f64,
    replicas: u64,
    grid_lo: Option<f64>,
    grid_hi: Option<f64>,
    flags: String,
}

/// CSV with columns `quantity, method, estimate, se, replicas, grid_lo,
/// grid_hi, flags`.
pub fn write_constants_csv<W: Write>(rows: &[TailEstimate], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(CsvRow {
            quantity: &r.quantity,
            method: r.method.as_str(),
            estimate: r.estimate,
            se: r.se,
            replicas: r.replicas,
            grid_lo: r.grid.first().copied(),
            grid_hi: r.grid.last().copied(),
            flags: r.flags.join(";"),
        })?;
    }
    w.flush()?;
    Ok(())
}
