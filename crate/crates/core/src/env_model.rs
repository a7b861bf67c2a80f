//! Environment laws for the site probabilities `ω ∈ (0, 1)` and the cumulant
//! analytics of the multiplier `A = (1 - ω) / ω`.
//!
//! Every family is parametrised so that `λ(s) = E A^s` has a closed form:
//! atoms of `A` for the discrete families, and `ω ~ Beta(a, b)` for the
//! continuous one, where `E A^s = B(a - s, b + s) / B(a, b)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::numerics::{bisect, integrate_unit};
use crate::rng::RngStream;

const PROB_SUM_TOL: f64 = 1e-12;
const ROOT_REL_TOL: f64 = 1e-12;

/// Law of the environment, described through the law of `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnvSpec", into = "RawEnvSpec")]
pub enum EnvSpec {
    /// `A = a1` with probability `p`, `A = a2` otherwise.
    TwoPoint { a1: f64, a2: f64, p: f64 },
    Discrete { atoms: Vec<f64>, probs: Vec<f64> },
    /// `ω ~ Beta(a, b)`.
    Beta { a: f64, b: f64 },
    Deterministic { a: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
enum RawEnvSpec {
    Beta { a: f64, b: f64 },
    TwoPoint { a1: f64, a2: f64, p: f64 },
    Discrete { atoms: Vec<f64>, probs: Vec<f64> },
    Deterministic { a: f64 },
}

impl TryFrom<RawEnvSpec> for EnvSpec {
    type Error = Error;

    fn try_from(raw: RawEnvSpec) -> Result<Self> {
        let spec = match raw {
            RawEnvSpec::Beta { a, b } => EnvSpec::Beta { a, b },
            RawEnvSpec::TwoPoint { a1, a2, p } => EnvSpec::TwoPoint { a1, a2, p },
            RawEnvSpec::Discrete { atoms, probs } => EnvSpec::Discrete { atoms, probs },
            RawEnvSpec::Deterministic { a } => EnvSpec::Deterministic { a },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<EnvSpec> for RawEnvSpec {
    fn from(spec: EnvSpec) -> Self {
        match spec {
            EnvSpec::Beta { a, b } => RawEnvSpec::Beta { a, b },
            EnvSpec::TwoPoint { a1, a2, p } => RawEnvSpec::TwoPoint { a1, a2, p },
            EnvSpec::Discrete { atoms, probs } => RawEnvSpec::Discrete { atoms, probs },
            EnvSpec::Deterministic { a } => RawEnvSpec::Deterministic { a },
        }
    }
}

fn positive(x: f64, what: &str) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("{what} must be positive and finite, got {x}")))
    }
}

impl EnvSpec {
    pub fn beta(a: f64, b: f64) -> Result<Self> {
        let s = EnvSpec::Beta { a, b };
        s.validate()?;
        Ok(s)
    }

    pub fn two_point(a1: f64, a2: f64, p: f64) -> Result<Self> {
        let s = EnvSpec::TwoPoint { a1, a2, p };
        s.validate()?;
        Ok(s)
    }

    pub fn discrete(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let s = EnvSpec::Discrete { atoms, probs };
        s.validate()?;
        Ok(s)
    }

    pub fn deterministic(a: f64) -> Result<Self> {
        let s = EnvSpec::Deterministic { a };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EnvSpec::Beta { a, b } => {
                positive(*a, "beta shape a")?;
                positive(*b, "beta shape b")
            }
            EnvSpec::Deterministic { a } => positive(*a, "atom"),
            EnvSpec::TwoPoint { a1, a2, p } => {
                positive(*a1, "atom a1")?;
                positive(*a2, "atom a2")?;
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidSpec(format!("p must lie in [0, 1], got {p}")));
                }
                Ok(())
            }
            EnvSpec::Discrete { atoms, probs } => {
                if atoms.is_empty() || atoms.len() != probs.len() {
                    return Err(Error::InvalidSpec(
                        "atoms and probs must be nonempty and of equal length".into(),
                    ));
                }
                for &a in atoms {
                    positive(a, "atom")?;
                }
                if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidSpec("probabilities must lie in [0, 1]".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > PROB_SUM_TOL {
                    return Err(Error::InvalidSpec(format!("probabilities sum to {total}")));
                }
                Ok(())
            }
        }
    }

    /// Atoms of `A` with their probabilities, for the discrete families.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            EnvSpec::TwoPoint { a1, a2, p } => Some(vec![(*a1, *p), (*a2, 1.0 - p)]),
            EnvSpec::Discrete { atoms, probs } => {
                Some(atoms.iter().copied().zip(probs.iter().copied()).collect())
            }
            EnvSpec::Deterministic { a } => Some(vec![(*a, 1.0)]),
            EnvSpec::Beta { .. } => None,
        }
    }

    fn support_atoms(&self) -> Option<Vec<(f64, f64)>> {
        self.atoms().map(|v| v.into_iter().filter(|(_, p)| *p > 0.0).collect())
    }

    /// `sup { s : E A^s < ∞ }`.
    pub fn alpha_inf(&self) -> f64 {
        match self {
            EnvSpec::Beta { a, .. } => *a,
            _ => f64::INFINITY,
        }
    }

    fn check_moment(&self, s: f64) -> Result<()> {
        let hi = self.alpha_inf();
        let lo = match self {
            EnvSpec::Beta { b, .. } => -*b,
            _ => f64::NEG_INFINITY,
        };
        if s >= hi || s <= lo || s.is_nan() {
            return Err(Error::MomentDiverges { s, alpha_inf: hi });
        }
        Ok(())
    }

    /// `λ(s) = E A^s`.
    pub fn lambda(&self, s: f64) -> Result<f64> {
        Ok(self.log_cumulant(s)?.exp())
    }

    /// `Λ(s) = log E A^s`.
    pub fn log_cumulant(&self, s: f64) -> Result<f64> {
        self.check_moment(s)?;
        if s == 0.0 {
            return Ok(0.0);
        }
        Ok(match self {
            EnvSpec::Beta { a, b } => ln_beta(a - s, b + s) - ln_beta(*a, *b),
            _ => {
                let atoms = self.support_atoms().expect("discrete family");
                log_sum_exp(atoms.iter().map(|(x, p)| p.ln() + s * x.ln()))
            }
        })
    }

    /// `Λ'(s)`; equals `E[A^s log A] / E[A^s]`.
    pub fn lambda_prime(&self, s: f64) -> Result<f64> {
        self.check_moment(s)?;
        Ok(match self {
            EnvSpec::Beta { a, b } => digamma(b + s) - digamma(a - s),
            _ => {
                let atoms = self.support_atoms().expect("discrete family");
                let lw: Vec<f64> = atoms.iter().map(|(x, p)| p.ln() + s * x.ln()).collect();
                let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut num = 0.0;
                let mut den = 0.0;
                for ((x, _), l) in atoms.iter().zip(&lw) {
                    let w = (l - m).exp();
                    num += w * x.ln();
                    den += w;
                }
                num / den
            }
        })
    }

    /// `E A^s` by quadrature over the density of `ω` (Beta family), or by
    /// direct summation (discrete families). Independent of the closed form.
    pub fn lambda_quadrature(&self, s: f64) -> Result<f64> {
        self.check_moment(s)?;
        Ok(self.expect_omega(|w, wc| (wc / w).powf(s)))
    }

    /// `E f(ω, 1 - ω)` under the environment law.
    pub fn expect_omega(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        match self {
            EnvSpec::Beta { a, b } => {
                let lb = ln_beta(*a, *b);
                integrate_unit(
                    |w, wc| {
                        let dens = ((a - 1.0) * w.ln() + (b - 1.0) * wc.ln() - lb).exp();
                        f(w, wc) * dens
                    },
                    1e-12,
                )
            }
            _ => self
                .support_atoms()
                .expect("discrete family")
                .iter()
                .map(|(x, p)| {
                    let w = 1.0 / (1.0 + x);
                    p * f(w, x * w)
                })
                .sum(),
        }
    }

    pub fn mean_log_a(&self) -> f64 {
        self.lambda_prime(0.0).expect("s = 0 is always in the domain")
    }

    /// `E A`, infinite when the first moment diverges.
    pub fn mean_a(&self) -> f64 {
        match self {
            EnvSpec::Beta { a, b } if *a > 1.0 => b / (a - 1.0),
            _ => self.lambda(1.0).unwrap_or(f64::INFINITY),
        }
    }

    /// `E ω`.
    pub fn mean_omega(&self) -> f64 {
        match self {
            EnvSpec::Beta { a, b } => a / (a + b),
            _ => self.expect_omega(|w, _| w),
        }
    }

    pub fn prob_a_above_one(&self) -> f64 {
        match self {
            EnvSpec::Beta { a, b } => beta_reg(*a, *b, 0.5),
            _ => self
                .support_atoms()
                .unwrap()
                .iter()
                .filter(|(x, _)| *x > 1.0)
                .map(|(_, p)| p)
                .sum(),
        }
    }

    /// Gate for models that must be transient to the right (`E log A < 0`).
    pub fn ensure_transient(&self) -> Result<()> {
        let m = self.mean_log_a();
        if m < 0.0 {
            Ok(())
        } else {
            Err(Error::NotTransient { mean_log_a: m })
        }
    }

    /// `sup_{0 < s < α∞} Λ'(s)`.
    pub fn rho_inf(&self) -> f64 {
        match self {
            EnvSpec::Beta { .. } => f64::INFINITY,
            _ => self
                .support_atoms()
                .unwrap()
                .iter()
                .map(|(x, _)| x.ln())
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Whether `log A` is supported on a lattice `hℤ`.
    pub fn is_arithmetic(&self) -> bool {
        match self {
            EnvSpec::Beta { .. } => false,
            _ => {
                let logs: Vec<f64> = self
                    .support_atoms()
                    .unwrap()
                    .iter()
                    .map(|(x, _)| x.ln())
                    .filter(|l| *l != 0.0)
                    .collect();
                logs.windows(2).all(|w| is_rational(w[0] / w[1]))
                    && logs.iter().all(|l| is_rational(l / logs[0]))
            }
        }
    }

    /// Unique `α > 0` with `λ(α) = 1`.
    pub fn solve_alpha(&self) -> Result<f64> {
        self.ensure_transient()?;
        let edge = self.alpha_inf();
        let mut lo = 0.0;
        let mut s = 1e-3;
        let mut found = false;
        for _ in 0..2000 {
            if s >= edge {
                break;
            }
            if self.lambda(s)? > 1.0 {
                found = true;
                break;
            }
            lo = s;
            let next = 2.0 * s;
            s = if next >= edge { 0.5 * (s + edge) } else { next };
            if edge.is_finite() && edge - s < 1e-15 * edge {
                break;
            }
            if s > 1e6 {
                break;
            }
        }
        if !found {
            return Err(Error::NoPositiveRoot);
        }
        let mut root = bisect(
            |t| self.lambda(t).map(|v| v - 1.0).unwrap_or(f64::INFINITY),
            lo,
            s,
            ROOT_REL_TOL,
        );
        // Newton polish; λ'(s) = λ(s) Λ'(s)
        for _ in 0..3 {
            let (Ok(l), Ok(d)) = (self.lambda(root), self.lambda_prime(root)) else { break };
            let next = root - (l - 1.0) / (l * d);
            if !(next > lo && next < s) {
                break;
            }
            root = next;
        }
        Ok(root)
    }

    /// Legendre–Fenchel transform `Λ*(ρ) = sup_s { sρ - Λ(s) }` for
    /// `E log A ≤ ρ < ρ∞`, via the solution of `Λ'(s) = ρ`.
    pub fn legendre(&self, rho: f64) -> Result<f64> {
        let (s, lam) = self.legendre_point(rho)?;
        Ok(s * rho - lam)
    }

    /// The maximiser `s*` with `Λ'(s*) = ρ`, together with `Λ(s*)`.
    pub fn legendre_point(&self, rho: f64) -> Result<(f64, f64)> {
        let lo = self.mean_log_a();
        let hi = self.rho_inf();
        if rho == lo {
            return Ok((0.0, 0.0));
        }
        if !(rho > lo && rho < hi) {
            return Err(Error::OutOfDomain { rho, lo, hi });
        }
        let edge = self.alpha_inf();
        let mut s_lo = 0.0;
        let mut s_hi = 1.0_f64.min(0.5 * edge);
        let mut bracketed = false;
        for _ in 0..4000 {
            if self.lambda_prime(s_hi)? >= rho {
                bracketed = true;
                break;
            }
            s_lo = s_hi;
            s_hi = if edge.is_finite() && 2.0 * s_hi >= edge {
                0.5 * (s_hi + edge)
            } else {
                2.0 * s_hi
            };
            if s_hi > 1e8 {
                break;
            }
        }
        if !bracketed {
            return Err(Error::OutOfDomain { rho, lo, hi });
        }
        let s = bisect(|t| self.lambda_prime(t).unwrap_or(f64::INFINITY) - rho, s_lo, s_hi, 1e-15);
        Ok((s, self.log_cumulant(s)?))
    }

    /// The exponentially tilted law `dP_θ ∝ A^θ dP`.
    pub fn tilted(&self, theta: f64) -> Result<EnvSpec> {
        self.check_moment(theta)?;
        match self {
            EnvSpec::Beta { a, b } => EnvSpec::beta(a - theta, b + theta),
            EnvSpec::Deterministic { a } => EnvSpec::deterministic(*a),
            _ => {
                let atoms = self.atoms().unwrap();
                let lam = self.lambda(theta)?;
                let mut probs: Vec<f64> =
                    atoms.iter().map(|(x, p)| p * x.powf(theta) / lam).collect();
                // renormalise away rounding so validation holds
                let total: f64 = probs.iter().sum();
                probs.iter_mut().for_each(|p| *p /= total);
                EnvSpec::discrete(atoms.iter().map(|(x, _)| *x).collect(), probs)
            }
        }
    }

    pub fn sampler(&self) -> EnvSampler {
        EnvSampler::new(self)
    }

    /// `count` iid draws of `A` from the given stream.
    pub fn sample_a(&self, stream: RngStream, count: usize) -> Vec<f64> {
        let sampler = self.sampler();
        let mut rng = stream.rng();
        (0..count).map(|_| sampler.sample(&mut rng).a).collect()
    }

    /// Derived analytics; fails when the model is not transient or
    /// `λ(s) = 1` has no positive root.
    pub fn profile(&self) -> Result<CumulantProfile> {
        let mean_log_a = self.mean_log_a();
        self.ensure_transient()?;
        let alpha = self.solve_alpha()?;
        let rho0 = self.lambda_prime(alpha)?;
        let mean_a = self.mean_a();
        let regime = if (mean_a - 1.0).abs() <= 1e-12 {
            Regime::Boundary
        } else if mean_a < 1.0 {
            Regime::Ballistic
        } else {
            Regime::SubBallistic
        };
        let speed_v = if mean_a < 1.0 { (1.0 - mean_a) / (1.0 + mean_a) } else { 0.0 };
        Ok(CumulantProfile {
            alpha,
            rho0,
            mean_a,
            mean_log_a,
            speed_v,
            regime,
            alpha_inf: self.alpha_inf(),
            rho_inf: self.rho_inf(),
            arithmetic_flag: self.is_arithmetic(),
        })
    }
}

fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Continued-fraction test for `x ≈ p/q` with `q ≤ 1000`.
fn is_rational(x: f64) -> bool {
    let target = x.abs();
    let (mut h0, mut h1) = (0.0_f64, 1.0_f64);
    let (mut k0, mut k1) = (1.0_f64, 0.0_f64);
    let mut r = target;
    for _ in 0..40 {
        let a = r.floor();
        let h2 = a * h1 + h0;
        let k2 = a * k1 + k0;
        if k2 > 1000.0 {
            return false;
        }
        if (h2 / k2 - target).abs() <= 1e-9 * target.max(1.0) {
            return true;
        }
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        let frac = r - a;
        if frac < 1e-15 {
            return true;
        }
        r = 1.0 / frac;
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Ballistic,
    SubBallistic,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantProfile {
    pub alpha: f64,
    /// `Λ'(α)`.
    pub rho0: f64,
    pub mean_a: f64,
    pub mean_log_a: f64,
    pub speed_v: f64,
    pub regime: Regime,
    pub alpha_inf: f64,
    pub rho_inf: f64,
    pub arithmetic_flag: bool,
}

/// Generations around the most likely deviation time `n0 = ⌊log x / ρ0⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationWindow {
    pub n0: i64,
    pub m: i64,
    pub n1: i64,
    pub n2: i64,
}

/// `⌊log x / ρ0⌋`, with a small guard against `log(exp(t))` rounding below `t`.
pub fn peak_generation(rho0: f64, x: f64) -> i64 {
    (x.ln() / rho0 + 1e-9).floor() as i64
}

pub fn deviation_window(profile: &CumulantProfile, x: f64, delta: f64) -> Result<DeviationWindow> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::Config(format!("window exponent delta must lie in (0, 1/2), got {delta}")));
    }
    if !(x > 1.0) {
        return Err(Error::Config(format!("threshold x must exceed 1, got {x}")));
    }
    let lx = x.ln();
    let n0 = peak_generation(profile.rho0, x);
    let m = (lx.powf(0.5 + delta) + 1e-9).floor() as i64;
    let n1 = n0 - m;
    if n1 <= 0 {
        return Err(Error::WindowDegenerate { n0, m });
    }
    Ok(DeviationWindow { n0, m, n1, n2: n0 + m })
}

/// One environment site: `ω` and `A = (1 - ω)/ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub omega: f64,
    pub a: f64,
}

/// Prepared sampler for iid sites.
#[derive(Debug, Clone)]
pub enum EnvSampler {
    Atoms { cum: Vec<f64>, sites: Vec<Site> },
    Beta { ga: Gamma<f64>, gb: Gamma<f64> },
}

const OMEGA_MIN: f64 = 1e-300;
const OMEGA_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

impl EnvSampler {
    pub fn new(spec: &EnvSpec) -> Self {
        match spec {
            EnvSpec::Beta { a, b } => EnvSampler::Beta {
                ga: Gamma::new(*a, 1.0).expect("validated shape"),
                gb: Gamma::new(*b, 1.0).expect("validated shape"),
            },
            _ => {
                let atoms = spec.support_atoms().unwrap();
                let mut cum = Vec::with_capacity(atoms.len());
                let mut acc = 0.0;
                for (_, p) in &atoms {
                    acc += p;
                    cum.push(acc);
                }
                let sites = atoms
                    .iter()
                    .map(|(x, _)| Site { omega: 1.0 / (1.0 + x), a: *x })
                    .collect();
                EnvSampler::Atoms { cum, sites }
            }
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Site {
        match self {
            EnvSampler::Atoms { cum, sites } => {
                if sites.len() == 1 {
                    return sites[0];
                }
                let u: f64 = rng.random::<f64>() * cum[cum.len() - 1];
                let idx = cum.partition_point(|&c| c <= u).min(sites.len() - 1);
                sites[idx]
            }
            EnvSampler::Beta { ga, gb } => {
                let x = ga.sample(rng);
                let y = gb.sample(rng);
                let omega = (x / (x + y)).clamp(OMEGA_MIN, OMEGA_MAX);
                let a = if x > 0.0 { (y / x).min(1e300) } else { 1e300 };
                Site { omega, a }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beta31() -> EnvSpec {
        EnvSpec::beta(3.0, 1.0).unwrap()
    }

    fn tp() -> EnvSpec {
        EnvSpec::two_point(2.0, 0.25, 0.5).unwrap()
    }

    #[test]
    fn lambda_examples() {
        assert!((tp().lambda(1.0).unwrap() - 1.125).abs() < 1e-15);
        assert_eq!(beta31().lambda(0.0).unwrap(), 1.0);
        assert_eq!(tp().lambda(0.0).unwrap(), 1.0);
        assert!((beta31().lambda(1.0).unwrap() - 0.5).abs() < 1e-13);
    }

    #[test]
    fn beta_moment_matches_quadrature() {
        // oracle: ∫ ((1-ω)/ω)^s 3ω² dω
        let spec = beta31();
        for s in [0.3, 1.0, 1.7, 2.5] {
            let closed = spec.lambda(s).unwrap();
            let quad = spec.lambda_quadrature(s).unwrap();
            assert!((closed - quad).abs() < 1e-8 * closed.max(1.0), "s={s}: {closed} vs {quad}");
        }
    }

    #[test]
    fn moment_diverges_beyond_alpha_inf() {
        assert!(matches!(beta31().lambda(3.0), Err(Error::MomentDiverges { .. })));
        assert!(matches!(beta31().lambda_prime(3.5), Err(Error::MomentDiverges { .. })));
    }

    #[test]
    fn lambda_prime_examples() {
        assert!((beta31().lambda_prime(2.0).unwrap() - 1.5).abs() < 1e-12);
        let d = EnvSpec::deterministic(0.5).unwrap();
        for s in [0.0, 0.7, 3.0] {
            assert!((d.log_cumulant(s).unwrap() - s * 0.5f64.ln()).abs() < 1e-14);
            assert!((d.lambda_prime(s).unwrap() - 0.5f64.ln()).abs() < 1e-14);
        }
        let want = -(2f64.ln()) / 2.0;
        assert!((tp().lambda_prime(0.0).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn solve_alpha_examples() {
        assert!((beta31().solve_alpha().unwrap() - 2.0).abs() < 1e-9);
        // bisection oracle on (2^s + 4^-s)/2 = 1, computed independently
        let f = |s: f64| (2f64.powf(s) + 4f64.powf(-s)) / 2.0 - 1.0;
        let (mut lo, mut hi) = (0.1, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 { hi = mid } else { lo = mid }
        }
        let a = tp().solve_alpha().unwrap();
        assert!(a > 0.69 && a < 0.70, "{a}");
        assert!((a - lo).abs() < 1e-9);
        assert!(matches!(
            EnvSpec::deterministic(0.5).unwrap().solve_alpha(),
            Err(Error::NoPositiveRoot)
        ));
        assert!(matches!(
            EnvSpec::deterministic(2.0).unwrap().solve_alpha(),
            Err(Error::NotTransient { .. })
        ));
    }

    #[test]
    fn legendre_examples() {
        let spec = beta31();
        let m = spec.mean_log_a();
        assert_eq!(spec.legendre(m).unwrap(), 0.0);
        let p = spec.profile().unwrap();
        assert!((p.rho0 - 1.5).abs() < 1e-12);
        let v = spec.legendre(p.rho0).unwrap();
        assert!((v - p.alpha * p.rho0).abs() < 1e-8);
        assert!((spec.legendre(1.5).unwrap() - 3.0).abs() < 1e-8);
        assert!(matches!(spec.legendre(m - 0.1), Err(Error::OutOfDomain { .. })));
        assert!(matches!(tp().legendre(2f64.ln() + 0.1), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn profile_examples() {
        let p = beta31().profile().unwrap();
        assert!((p.alpha - 2.0).abs() < 1e-9);
        assert!((p.mean_a - 0.5).abs() < 1e-12);
        assert_eq!(p.speed_v, 1.0 / 3.0);
        assert_eq!(p.regime, Regime::Ballistic);
        assert!(!p.arithmetic_flag);
        assert_eq!(p.alpha_inf, 3.0);

        let p = tp().profile().unwrap();
        assert!((p.mean_a - 1.125).abs() < 1e-15);
        assert_eq!(p.speed_v, 0.0);
        assert_eq!(p.regime, Regime::SubBallistic);
        assert!(p.arithmetic_flag);

        let p = EnvSpec::two_point(0.5, 4.0 / 3.0, 0.5).unwrap().profile().unwrap();
        assert!((p.mean_a - 11.0 / 12.0).abs() < 1e-15);
        assert!((p.speed_v - 1.0 / 23.0).abs() < 1e-15);
        assert_eq!(p.regime, Regime::Ballistic);
        assert!(!p.arithmetic_flag);
    }

    #[test]
    fn window_examples() {
        let p = beta31().profile().unwrap();
        let w = deviation_window(&p, 15f64.exp(), 0.1).unwrap();
        assert_eq!(w, DeviationWindow { n0: 10, m: 5, n1: 5, n2: 15 });
        assert_eq!(peak_generation(p.rho0, p.rho0.exp()), 1);
        assert!(matches!(
            deviation_window(&p, 3.0, 0.1),
            Err(Error::WindowDegenerate { .. })
        ));
    }

    #[test]
    fn deterministic_samples_and_replay() {
        let d = EnvSpec::deterministic(0.5).unwrap();
        assert_eq!(d.sample_a(RngStream::new(1, 1), 3), vec![0.5, 0.5, 0.5]);
        let s = RngStream::new(9, 4);
        assert_eq!(beta31().sample_a(s, 50), beta31().sample_a(s, 50));
    }

    #[test]
    fn beta_sample_mean() {
        let xs = beta31().sample_a(RngStream::new(11, 0), 1_000_000);
        let acc: crate::stats::MeanAcc = xs.iter().copied().collect();
        assert!((acc.mean() - 0.5).abs() < 3.0 * acc.se(), "{} ± {}", acc.mean(), acc.se());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let s: EnvSpec = serde_json::from_str(r#"{"family":"beta","a":3.0,"b":1.0}"#).unwrap();
        assert_eq!(s, beta31());
        let s: EnvSpec =
            serde_json::from_str(r#"{"family":"two_point","a1":2.0,"a2":0.25,"p":0.5}"#).unwrap();
        assert_eq!(s, tp());
        let j = serde_json::to_string(&EnvSpec::deterministic(0.5).unwrap()).unwrap();
        assert_eq!(j, r#"{"family":"deterministic","a":0.5}"#);
        assert!(serde_json::from_str::<EnvSpec>(
            r#"{"family":"discrete","atoms":[1.0,2.0],"probs":[0.5,0.6]}"#
        )
        .is_err());
        assert!(serde_json::from_str::<EnvSpec>(r#"{"family":"beta","a":-1.0,"b":1.0}"#).is_err());
    }

    #[test]
    fn tilted_discrete_weights() {
        let spec = tp();
        let alpha = spec.solve_alpha().unwrap();
        let t = spec.tilted(alpha).unwrap();
        let atoms = t.atoms().unwrap();
        assert!((atoms[0].1 - 0.5 * 2f64.powf(alpha)).abs() < 1e-9);
        assert_eq!(beta31().tilted(2.0).unwrap(), EnvSpec::beta(1.0, 3.0).unwrap());
    }
}
