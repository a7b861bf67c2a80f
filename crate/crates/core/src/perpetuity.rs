//! Affine recursions driven by `(A_n, A_n)`: the forward chain
//! `Y_n = A_n (Y_{n-1} + 1)`, the backward (perpetuity) sums
//! `Ỹ_n = Σ_{j ≤ n} Π_{0,j}`, the Kesten–Goldie tail constant of `Ỹ_∞`, and
//! exponentially tilted estimators for rare product and window events.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::branching::{geometric, offspring, DEFAULT_GENERATION_CAP};
use crate::env_model::{DeviationWindow, EnvSampler, EnvSpec, Site};
use crate::error::{Error, Result};
use crate::parallel::reduce_replicas;
use crate::rng::{role, RngStream};
use crate::stats::MeanAcc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerpetuityPath {
    pub n: usize,
    /// `A_0 .. A_n`
    pub a: Vec<f64>,
    /// `Y_0 .. Y_n` with `Y_0 = A_0`.
    pub forward: Vec<f64>,
    /// `Ỹ_0 .. Ỹ_n`.
    pub backward: Vec<f64>,
    /// `Π_{0,0} .. Π_{0,n}`.
    pub products: Vec<f64>,
}

pub fn run_perpetuity(spec: &EnvSpec, n: usize, stream: RngStream) -> Result<PerpetuityPath> {
    if n == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let sampler = spec.sampler();
    let mut rng = stream.substream(role::PERPETUITY).rng();
    let mut a = Vec::with_capacity(n + 1);
    let mut forward = Vec::with_capacity(n + 1);
    let mut backward = Vec::with_capacity(n + 1);
    let mut products = Vec::with_capacity(n + 1);
    let (mut y, mut yb, mut prod) = (0.0f64, 0.0f64, 1.0f64);
    for _ in 0..=n {
        let ak = sampler.sample(&mut rng).a;
        a.push(ak);
        y = ak * (y + 1.0);
        prod *= ak;
        yb += prod;
        forward.push(y);
        products.push(prod);
        backward.push(yb);
    }
    Ok(PerpetuityPath { n, a, forward, backward, products })
}

/// Truncation rule for `Ỹ_∞`: the moment order `θ = min(1, 0.9 α)` (1 when
/// there is no positive root) and the smallest `N` with `λ(θ)^N < tol`.
pub fn truncation(spec: &EnvSpec, tol: f64) -> Result<(f64, usize)> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Config(format!("truncation tolerance must lie in (0, 1), got {tol}")));
    }
    spec.ensure_transient()?;
    let theta = match spec.solve_alpha() {
        Ok(alpha) => (0.9 * alpha).min(1.0),
        Err(Error::NoPositiveRoot) => 1.0,
        Err(e) => return Err(e),
    };
    let lam = spec.lambda(theta)?;
    if lam >= 1.0 {
        return Err(Error::NotTransient { mean_log_a: spec.mean_log_a() });
    }
    let n = (tol.ln() / lam.ln()).floor() as usize + 1;
    Ok((theta, n))
}

/// Draws of the truncated perpetuity `Ỹ_N ≈ Ỹ_∞`.
#[derive(Debug, Clone)]
pub struct YInfSampler {
    sampler: EnvSampler,
    pub truncation: usize,
}

impl YInfSampler {
    pub fn new(spec: &EnvSpec, tol: f64) -> Result<Self> {
        let (_, n) = truncation(spec, tol)?;
        Ok(Self { sampler: spec.sampler(), truncation: n })
    }

    /// `Ỹ_N = Σ_{j=0}^{N} Π_{0,j}`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut prod = 1.0;
        let mut sum = 0.0;
        for _ in 0..=self.truncation {
            prod *= self.sampler.sample(rng).a;
            sum += prod;
        }
        sum
    }
}

/// One draw of `Ỹ_∞` truncated at relative tolerance `tol`; returns the value
/// and the truncation index.
pub fn approx_y_inf(spec: &EnvSpec, tol: f64, stream: RngStream) -> Result<(f64, usize)> {
    let s = YInfSampler::new(spec, tol)?;
    let mut rng = stream.substream(role::PERPETUITY).rng();
    Ok((s.sample(&mut rng), s.truncation))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KestenEstimate {
    pub alpha: f64,
    pub estimate: f64,
    pub se: f64,
    /// Monte Carlo mean of `(Ỹ_∞ + 1)^α - Ỹ_∞^α`.
    pub numerator: f64,
    pub numerator_se: f64,
    /// `α E[A^α log A] = α λ'(α)`.
    pub denominator: f64,
    pub replicas: u64,
    pub truncation: usize,
}

/// `C₂(α) = E[(Ỹ_∞ + 1)^α - Ỹ_∞^α] / (α E[A^α log A])`.
pub fn kesten_c2(
    spec: &EnvSpec,
    replicas: u64,
    tol: f64,
    stream: RngStream,
    workers: usize,
) -> Result<KestenEstimate> {
    let alpha = spec.solve_alpha()?;
    // λ'(α) = λ(α) Λ'(α) = Λ'(α)
    let denominator = alpha * spec.lambda_prime(alpha)?;
    let sampler = YInfSampler::new(spec, tol)?;
    let acc = reduce_replicas(
        workers,
        replicas,
        MeanAcc::default,
        |acc, r| {
            let mut rng = stream.replica(r).substream(role::PERPETUITY).rng();
            let y = sampler.sample(&mut rng);
            acc.push((y + 1.0).powf(alpha) - y.powf(alpha));
            Ok(())
        },
        MeanAcc::merge,
    )?;
    Ok(KestenEstimate {
        alpha,
        estimate: acc.mean() / denominator,
        se: acc.se() / denominator,
        numerator: acc.mean(),
        numerator_se: acc.se(),
        denominator,
        replicas,
        truncation: sampler.truncation,
    })
}

/// Empirical `x^α P(Ỹ_∞ > x)` over a grid of `x`, from one shared sample.
pub fn perpetuity_tail_curve(
    spec: &EnvSpec,
    alpha: f64,
    xs: &[f64],
    replicas: u64,
    tol: f64,
    stream: RngStream,
    workers: usize,
) -> Result<Vec<TailRow>> {
    let sampler = YInfSampler::new(spec, tol)?;
    let counts = reduce_replicas(
        workers,
        replicas,
        || vec![0u64; xs.len()],
        |acc, r| {
            let mut rng = stream.replica(r).substream(role::PERPETUITY).rng();
            let y = sampler.sample(&mut rng);
            for (c, &x) in acc.iter_mut().zip(xs) {
                if y > x {
                    *c += 1;
                }
            }
            Ok(())
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        },
    )?;
    Ok(xs
        .iter()
        .zip(counts)
        .map(|(&x, hits)| {
            let (p, se) = crate::stats::proportion(hits, replicas);
            let scale = x.powf(alpha);
            TailRow {
                quantity: "perpetuity_full".into(),
                x,
                n_window: sampler.truncation as i64,
                estimate: p * scale,
                se: se * scale,
                replicas,
            }
        })
        .collect())
}

/// Sampler for the exponentially tilted law `dP_θ ∝ A^θ dP` together with the
/// log-likelihood ratio bookkeeping. After `k` tilted draws the weight
/// `dP/dP_θ` is `exp(k Λ(θ) - θ Σ log A_i)`.
#[derive(Debug, Clone)]
pub struct TiltedStream {
    pub theta: f64,
    pub log_lambda: f64,
    tilted: EnvSampler,
    base: EnvSampler,
}

impl TiltedStream {
    pub fn new(spec: &EnvSpec, theta: f64) -> Result<Self> {
        let tilted = spec
            .tilted(theta)
            .map_err(|e| Error::TiltUnavailable(format!("theta = {theta}: {e}")))?;
        Ok(Self {
            theta,
            log_lambda: spec.log_cumulant(theta)?,
            tilted: tilted.sampler(),
            base: spec.sampler(),
        })
    }

    #[inline]
    pub fn tilted_site<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        self.tilted.sample(rng)
    }

    #[inline]
    pub fn base_site<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        self.base.sample(rng)
    }

    /// Log of `dP/dP_θ` for `k` tilted draws with `Σ log A = log_prod`.
    #[inline]
    pub fn log_weight(&self, k: usize, log_prod: f64) -> f64 {
        k as f64 * self.log_lambda - self.theta * log_prod
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbEstimate {
    pub estimate: f64,
    pub se: f64,
    pub replicas: u64,
    /// Replicas on which the event occurred.
    pub hits: u64,
}

#[derive(Default, Clone, Copy)]
struct WeightedAcc {
    acc: MeanAcc,
    hits: u64,
}

impl WeightedAcc {
    fn merge(self, o: Self) -> Self {
        Self { acc: self.acc.merge(o.acc), hits: self.hits + o.hits }
    }

    fn finish(self, replicas: u64) -> ProbEstimate {
        ProbEstimate { estimate: self.acc.mean(), se: self.acc.se(), replicas, hits: self.hits }
    }
}

/// Unbiased estimate of `P(Π_n > x)`, `Π_n = A_1 ⋯ A_n`, sampling the
/// `A`'s under the `θ`-tilted law (default `θ = α`).
pub fn tilted_product_tail(
    spec: &EnvSpec,
    n: usize,
    x: f64,
    replicas: u64,
    theta: Option<f64>,
    stream: RngStream,
    workers: usize,
) -> Result<ProbEstimate> {
    if !(x > 0.0) {
        return Err(Error::Config(format!("threshold must be positive, got {x}")));
    }
    let theta = match theta {
        Some(t) => t,
        None => spec.solve_alpha()?,
    };
    let tilt = TiltedStream::new(spec, theta)?;
    let log_x = x.ln();
    let acc = reduce_replicas(
        workers,
        replicas,
        WeightedAcc::default,
        |acc, r| {
            let mut rng = stream.replica(r).substream(role::TILT).rng();
            let log_prod: f64 = (0..n).map(|_| tilt.tilted_site(&mut rng).a.ln()).sum();
            if log_prod > log_x {
                acc.hits += 1;
                acc.acc.push(tilt.log_weight(n, log_prod).exp());
            } else {
                acc.acc.push(0.0);
            }
            Ok(())
        },
        WeightedAcc::merge,
    )?;
    Ok(acc.finish(replicas))
}

/// Plain Monte Carlo estimate of `P(Π_n > x)`.
pub fn plain_product_tail(
    spec: &EnvSpec,
    n: usize,
    x: f64,
    replicas: u64,
    stream: RngStream,
    workers: usize,
) -> Result<ProbEstimate> {
    let sampler = spec.sampler();
    let log_x = x.ln();
    let hits = reduce_replicas(
        workers,
        replicas,
        || 0u64,
        |h, r| {
            let mut rng = stream.replica(r).substream(role::PERPETUITY).rng();
            let lp: f64 = (0..n).map(|_| sampler.sample(&mut rng).a.ln()).sum();
            if lp > log_x {
                *h += 1;
            }
            Ok(())
        },
        |a, b| a + b,
    )?;
    let (p, se) = crate::stats::proportion(hits, replicas);
    Ok(ProbEstimate { estimate: p, se, replicas, hits })
}

/// One row of a normalised tail report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub quantity: String,
    pub x: f64,
    pub n_window: i64,
    pub estimate: f64,
    pub se: f64,
    pub replicas: u64,
}

impl TailRow {
    /// Upper end of the normal 95% interval.
    pub fn upper95(&self) -> f64 {
        self.estimate + 1.96 * self.se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub x: f64,
    pub alpha: f64,
    pub window: DeviationWindow,
    /// Smallness threshold on the normalised tails.
    pub threshold: f64,
    pub rows: Vec<TailRow>,
}

impl WindowReport {
    pub fn row(&self, quantity: &str) -> Option<&TailRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }

    /// Whether the four negligible pieces are below the threshold with 95%
    /// confidence.
    pub fn negligible(&self) -> bool {
        NEGLIGIBLE
            .iter()
            .all(|q| self.row(q).is_some_and(|r| r.upper95() < self.threshold))
    }
}

pub const NEGLIGIBLE: [&str; 4] =
    ["perpetuity_early", "perpetuity_late", "branching_early", "branching_late"];

/// Tilt exponent of the branching pieces, as a fraction of `α`. A line
/// survives a site with small `A` with probability of order `A`, so under
/// the full `α`-tilt the second moment of the weight on the event behaves
/// like `∫ A^{1-θ} p(A) dA / A`, which diverges at `θ = α` when `p` does not
/// vanish at 0 (e.g. Beta with `b = 1`).
pub const BRANCH_TILT: f64 = 0.9;

/// Tilted draws of `A_0, A_1, ...` until the partial sum
/// `Σ_{j=start}^{i} Π_{0,j}` first exceeds `x`. Returns the likelihood ratio
/// `Π_{0,T}^{-α}` at the crossing `T` if `T ≤ end`, else 0. The event
/// `{T ≤ end}` is exactly the event that the piece `Σ_{j=start}^{end} Π_{0,j}`
/// exceeds `x`, and stopping at `T` keeps the weight bounded on the event
/// (the plain `α`-tilt of a fixed prefix has infinite variance for laws with
/// mass near `A = 0`).
fn stopped_piece<R: Rng + ?Sized>(
    tilt: &TiltedStream,
    start: usize,
    end: Option<usize>,
    x: f64,
    rng: &mut R,
) -> Result<f64> {
    let mut log_prod = 0.0;
    let mut partial = 0.0;
    let mut j = 0usize;
    loop {
        if end.is_some_and(|e| j > e) {
            return Ok(0.0);
        }
        if j as u64 >= DEFAULT_GENERATION_CAP {
            return Err(Error::HorizonExceeded { cap: DEFAULT_GENERATION_CAP });
        }
        log_prod += tilt.tilted_site(rng).a.ln();
        if j >= start {
            partial += log_prod.exp();
            if partial > x {
                return Ok(tilt.log_weight(j + 1, log_prod).exp());
            }
        }
        j += 1;
    }
}

/// Normalised tails `x^α P(·)` of the pieces of `Ỹ_∞` and of the first
/// immigrant's progeny outside the deviation window, plus the full tail and
/// the in-window tail.
///
/// Rows: `perpetuity_early` (`Ỹ_{n1} > x`), `perpetuity_late`
/// (`Ỹ_∞ - Ỹ_{n2} > x`), `branching_early` (`Z̃_{n1} > x`),
/// `branching_late` (`Z̃^1_{n2,∞} > x`), `perpetuity_full` (`Ỹ_∞ > x`),
/// `perpetuity_window` (`Ỹ_{n2} - Ỹ_{n1} > x`).
///
/// Every piece tilts the environment by `α` only up to a stopping time: the
/// first crossing of `x` by the piece itself (or by the population, for the
/// late branching piece), or the end of its generation range.
#[allow(clippy::too_many_arguments)]
pub fn window_tails(
    spec: &EnvSpec,
    alpha: f64,
    window: DeviationWindow,
    x: f64,
    threshold: f64,
    replicas: u64,
    stream: RngStream,
    workers: usize,
) -> Result<WindowReport> {
    if !(x > 0.0) {
        return Err(Error::Config(format!("threshold must be positive, got {x}")));
    }
    spec.ensure_transient()?;
    let n1 = window.n1 as usize;
    let n2 = window.n2 as usize;
    let tilt = TiltedStream::new(spec, alpha)?;
    let branch_tilt = TiltedStream::new(spec, BRANCH_TILT * alpha)?;
    let scale = x.powf(alpha);
    // a fixed A leaves nothing to sample in the perpetuity pieces
    let fixed_a = match spec {
        EnvSpec::Deterministic { a } => Some(*a),
        _ => None,
    };
    if fixed_a.is_none() && spec.lambda_prime(alpha)? <= 0.0 {
        return Err(Error::Config(format!("tilt {alpha} has no upward drift; the tail pieces would not terminate")));
    }

    #[derive(Clone, Copy, Default)]
    struct Accs {
        q: [MeanAcc; 6],
    }

    let accs = reduce_replicas(
        workers,
        replicas,
        Accs::default,
        |accs, r| {
            let rs = stream.replica(r);
            let tilt_root = rs.substream(role::TILT);
            let pieces = [(0, Some(n1)), (n2 + 1, None), (0, None), (n1 + 1, Some(n2))];
            for (slot, (i, (start, end))) in [0usize, 1, 4, 5].into_iter().zip(pieces.into_iter().enumerate()) {
                let v = match fixed_a {
                    Some(a) => {
                        let head = a.powi(start as i32 + 1);
                        let sum = match end {
                            Some(e) => head * (1.0 - a.powi((e + 1 - start) as i32)) / (1.0 - a),
                            None => head / (1.0 - a),
                        };
                        if sum > x { 1.0 } else { 0.0 }
                    }
                    None => stopped_piece(&tilt, start, end, x, &mut tilt_root.substream(i as u64).rng())?,
                };
                accs.q[slot].push(v);
            }

            // early branching piece: tilted environment until the running
            // total of the line crosses x or generation n1 is done
            let mut brng = rs.substream(role::BRANCH).rng();
            let mut erng = rs.substream(role::ENV).rng();
            let mut log_env = 0.0;
            let mut pop = 1u64;
            let mut total = 0u64;
            let mut w_early = 0.0;
            for k in 0..n1 {
                let site = branch_tilt.tilted_site(&mut erng);
                log_env += site.a.ln();
                pop = if k == 0 { geometric(site.omega, &mut brng) as u64 } else { offspring(pop, site.omega, &mut brng)? };
                total += pop;
                if total as f64 > x {
                    w_early = branch_tilt.log_weight(k + 1, log_env).exp();
                    break;
                }
                if pop == 0 {
                    break;
                }
            }
            accs.q[2].push(w_early);

            // late branching piece: tilted environment until generation n2
            // or until the population itself exceeds x
            let mut brng = rs.substream(role::BRANCH).substream(1).rng();
            let mut erng = rs.substream(role::ENV).substream(1).rng();
            let mut log_env = 0.0;
            let mut tilted_sites = 0usize;
            let mut tilting = true;
            let mut pop = 1u64;
            let mut late = 0u64;
            let mut k = 0usize;
            while pop > 0 {
                if k as u64 >= DEFAULT_GENERATION_CAP {
                    return Err(Error::HorizonExceeded { cap: DEFAULT_GENERATION_CAP });
                }
                tilting &= k < n2;
                let site = if tilting {
                    let s = branch_tilt.tilted_site(&mut erng);
                    log_env += s.a.ln();
                    tilted_sites += 1;
                    s
                } else {
                    branch_tilt.base_site(&mut erng)
                };
                pop = if k == 0 { geometric(site.omega, &mut brng) as u64 } else { offspring(pop, site.omega, &mut brng)? };
                k += 1;
                tilting &= pop as f64 <= x;
                if k >= n2 {
                    late += pop;
                    if late as f64 > x {
                        break;
                    }
                }
            }
            accs.q[3].push(if late as f64 > x { branch_tilt.log_weight(tilted_sites, log_env).exp() } else { 0.0 });
            Ok(())
        },
        |mut a, b| {
            for (x, y) in a.q.iter_mut().zip(b.q) {
                *x = x.merge(y);
            }
            a
        },
    )?;
    let names = [
        ("perpetuity_early", window.n1),
        ("perpetuity_late", window.n2),
        ("branching_early", window.n1),
        ("branching_late", window.n2),
        ("perpetuity_full", window.n2),
        ("perpetuity_window", window.n2),
    ];
    let rows = names
        .iter()
        .zip(accs.q)
        .map(|((q, nw), acc)| TailRow {
            quantity: q.to_string(),
            x,
            n_window: *nw,
            estimate: acc.mean() * scale,
            se: acc.se() * scale,
            replicas,
        })
        .collect();
    Ok(WindowReport { x, alpha, window, threshold, rows })
}

/// [`window_tails`] with the window from `spec`'s profile and threshold
/// `threshold_factor · C₂`.
#[allow(clippy::too_many_arguments)]
pub fn window_negligibility(
    spec: &EnvSpec,
    x: f64,
    delta: f64,
    c2: f64,
    threshold_factor: f64,
    replicas: u64,
    stream: RngStream,
    workers: usize,
) -> Result<WindowReport> {
    let profile = spec.profile()?;
    let window = crate::env_model::deviation_window(&profile, x, delta)?;
    window_tails(spec, profile.alpha, window, x, threshold_factor * c2, replicas, stream, workers)
}

/// CSV with columns `quantity, x, n_window, estimate, se, replicas`.
pub fn write_tail_csv<W: Write>(rows: &[TailRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
