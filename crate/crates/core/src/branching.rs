//! Branching process in random environment with immigration.
//!
//! Generation `k` reproduces with geometric offspring of parameter `ω_k`
//! (`P(ξ = l) = ω (1 - ω)^l`, mean `A_k`). One immigrant arrives in every
//! generation; immigrant `i ≥ 1` arrives in generation `i - 1`, so its first
//! offspring generation is `i`. Left-step counts of the walk have this law.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::env_model::{DeviationWindow, EnvSampler, EnvSpec};
use crate::error::{Error, Result};
use crate::numerics::DoubleDouble;
use crate::rng::{role, RngStream};

pub const DEFAULT_GENERATION_CAP: u64 = 100_000_000;

/// Up to this many parents, offspring are drawn as a sum of geometrics;
/// above it, through the gamma–Poisson mixture.
const DIRECT_SUM_LIMIT: u64 = 16;
const POP_LIMIT: f64 = 9.2e18;

/// One geometric draw on `{0, 1, ...}` with success probability `omega`.
#[inline]
pub fn geometric<R: Rng + ?Sized>(omega: f64, rng: &mut R) -> f64 {
    if omega >= 1.0 {
        return 0.0;
    }
    let u = 1.0 - rng.random::<f64>(); // (0, 1]
    (u.ln() / (-omega).ln_1p()).floor()
}

/// Total offspring of `parents` particles: negative binomial with
/// `parents` successes, counting failures.
pub fn offspring<R: Rng + ?Sized>(parents: u64, omega: f64, rng: &mut R) -> Result<u64> {
    if parents == 0 || omega >= 1.0 {
        return Ok(0);
    }
    let total = if parents <= DIRECT_SUM_LIMIT {
        (0..parents).map(|_| geometric(omega, rng)).sum::<f64>()
    } else {
        let scale = (1.0 - omega) / omega;
        let rate = Gamma::new(parents as f64, scale)
            .map_err(|_| Error::PopulationOverflow { generation: 0 })?
            .sample(rng);
        if rate <= 0.0 {
            0.0
        } else if rate > POP_LIMIT {
            f64::INFINITY
        } else {
            Poisson::new(rate)
                .map_err(|_| Error::PopulationOverflow { generation: 0 })?
                .sample(rng)
        }
    };
    if !(total < POP_LIMIT) {
        return Err(Error::PopulationOverflow { generation: 0 });
    }
    Ok(total as u64)
}

/// `P(offspring(parents, ω) = l) = C(l + parents - 1, l) ω^parents (1-ω)^l`.
pub fn offspring_pmf(parents: u64, omega: f64, l: u64) -> f64 {
    if parents == 0 {
        return if l == 0 { 1.0 } else { 0.0 };
    }
    let r = parents as f64;
    let lf = l as f64;
    (ln_gamma(lf + r) - ln_gamma(r) - ln_gamma(lf + 1.0) + r * omega.ln() + lf * (-omega).ln_1p()).exp()
}

/// `Σ_{k=1}^{z} ξ_k + ξ_0`: the next generation given `z` parents plus one
/// immigrant.
pub fn step_generation<R: Rng + ?Sized>(z: u64, omega: f64, rng: &mut R) -> Result<u64> {
    offspring(z.saturating_add(1), omega, rng)
}

fn tag_generation(e: Error, generation: u64) -> Error {
    match e {
        Error::PopulationOverflow { .. } => Error::PopulationOverflow { generation },
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchTrajectory {
    pub horizon: usize,
    /// `Z_0 .. Z_n`, with `Z_0 = 0`.
    pub z: Vec<u64>,
    /// `ω_0 .. ω_{n-1}`.
    pub omega: Vec<f64>,
    /// `A_0 .. A_{n-1}`.
    pub a: Vec<f64>,
    /// `lines[i-1][k-i] = Z_{i,k}` for `i ≤ k ≤ n`.
    pub lines: Option<Vec<Vec<u64>>>,
    /// Quenched means `E_ω Z_k`, `k = 0..n`.
    pub quenched_means: Option<Vec<f64>>,
}

impl BranchTrajectory {
    /// `Z_{i,k}`; zero before the line starts.
    pub fn line(&self, i: usize, k: usize) -> Option<u64> {
        let lines = self.lines.as_ref()?;
        if i == 0 || i > self.horizon || k > self.horizon {
            return None;
        }
        Some(if k < i { 0 } else { lines[i - 1][k - i] })
    }

    /// Whether `Z_k = Σ_i Z_{i,k}` for every generation (always, when
    /// lines are tracked).
    pub fn lines_add_up(&self) -> Option<bool> {
        self.lines.as_ref()?;
        Some((1..=self.horizon).all(|k| {
            let s: u64 = (1..=k).map(|i| self.line(i, k).unwrap()).sum();
            s == self.z[k]
        }))
    }

    /// The path up to (not including) the first return to 0.
    pub fn first_cycle(&self) -> &[u64] {
        let end = self.z.iter().skip(1).position(|&v| v == 0).map(|p| p + 1);
        &self.z[..end.unwrap_or(self.z.len())]
    }
}

/// Simulate `Z_0..Z_n` with immigration in every generation.
pub fn simulate_z(
    spec: &EnvSpec,
    n: usize,
    stream: RngStream,
    track_lines: bool,
    track_quenched_means: bool,
) -> Result<BranchTrajectory> {
    if n == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let sampler = spec.sampler();
    let mut env_rng = stream.substream(role::ENV).rng();
    let mut rng = stream.substream(role::BRANCH).rng();
    let mut z = Vec::with_capacity(n + 1);
    z.push(0u64);
    let mut omega = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut lines: Vec<Vec<u64>> = Vec::new();
    let mut means = vec![0.0f64];
    for k in 0..n {
        let site = sampler.sample(&mut env_rng);
        omega.push(site.omega);
        a.push(site.a);
        let next = if track_lines {
            let mut total = 0u64;
            for line in lines.iter_mut() {
                let cur = *line.last().unwrap();
                let v = offspring(cur, site.omega, &mut rng).map_err(|e| tag_generation(e, k as u64 + 1))?;
                line.push(v);
                total = total.checked_add(v).ok_or(Error::PopulationOverflow { generation: k as u64 + 1 })?;
            }
            let v = geometric(site.omega, &mut rng);
            if !(v < POP_LIMIT) {
                return Err(Error::PopulationOverflow { generation: k as u64 + 1 });
            }
            lines.push(vec![v as u64]);
            total
                .checked_add(v as u64)
                .ok_or(Error::PopulationOverflow { generation: k as u64 + 1 })?
        } else {
            step_generation(z[k], site.omega, &mut rng).map_err(|e| tag_generation(e, k as u64 + 1))?
        };
        z.push(next);
        if track_quenched_means {
            let prev = means[k];
            means.push(site.a * prev + site.a);
        }
    }
    Ok(BranchTrajectory {
        horizon: n,
        z,
        omega,
        a,
        lines: track_lines.then_some(lines),
        quenched_means: track_quenched_means.then_some(means),
    })
}

/// Line of a single immigrant: `Z_{1,1}, Z_{1,2}, ..., Z_{1,horizon}`.
pub fn simulate_line(spec: &EnvSpec, horizon: usize, stream: RngStream) -> Result<Vec<u64>> {
    let sampler = spec.sampler();
    let mut env_rng = stream.substream(role::ENV).rng();
    let mut rng = stream.substream(role::BRANCH).rng();
    let mut out = Vec::with_capacity(horizon);
    let mut cur = 1u64; // the immigrant itself
    for k in 0..horizon {
        let site = sampler.sample(&mut env_rng);
        cur = offspring(cur, site.omega, &mut rng).map_err(|e| tag_generation(e, k as u64 + 1))?;
        out.push(cur);
    }
    Ok(out)
}

/// Total progeny `W_n` of immigrants `1..=n`, run to extinction.
pub fn total_progeny_w(spec: &EnvSpec, n: u64, stream: RngStream) -> Result<u64> {
    total_progeny_w_capped(spec, n, stream, DEFAULT_GENERATION_CAP)
}

pub fn total_progeny_w_capped(spec: &EnvSpec, n: u64, stream: RngStream, cap: u64) -> Result<u64> {
    spec.ensure_transient()?;
    if n == 0 {
        return Ok(0);
    }
    let sampler = spec.sampler();
    let mut env_rng = stream.substream(role::ENV).rng();
    let mut rng = stream.substream(role::BRANCH).rng();
    let mut z = 0u64;
    let mut w = 0u64;
    let mut k = 0u64;
    loop {
        if k >= cap {
            return Err(Error::HorizonExceeded { cap });
        }
        let site = sampler.sample(&mut env_rng);
        let parents = if k < n { z + 1 } else { z };
        z = offspring(parents, site.omega, &mut rng).map_err(|e| tag_generation(e, k + 1))?;
        w = w.checked_add(z).ok_or(Error::PopulationOverflow { generation: k + 1 })?;
        k += 1;
        if k >= n && z == 0 {
            return Ok(w);
        }
    }
}

/// One regeneration cycle: `Z_{ν_{j-1}} = 0, ..., Z_{ν_j - 1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cycle {
    pub path: Vec<u64>,
}

impl Cycle {
    pub fn len(&self) -> u64 {
        self.path.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    /// `Σ_{k=ν_{j-1}}^{ν_j - 1} Z_k`.
    pub fn sum(&self) -> u64 {
        self.path.iter().sum()
    }

    pub fn max(&self) -> u64 {
        self.path.iter().copied().max().unwrap_or(0)
    }
}

/// The process with perpetual immigration, consumed cycle by cycle.
pub struct RegenerativeChain {
    sampler: EnvSampler,
    env_rng: rand_chacha::ChaCha8Rng,
    rng: rand_chacha::ChaCha8Rng,
    cap: u64,
}

impl RegenerativeChain {
    pub fn new(spec: &EnvSpec, stream: RngStream) -> Result<Self> {
        spec.ensure_transient()?;
        Ok(Self {
            sampler: spec.sampler(),
            env_rng: stream.substream(role::ENV).rng(),
            rng: stream.substream(role::BRANCH).rng(),
            cap: DEFAULT_GENERATION_CAP,
        })
    }

    pub fn next_cycle(&mut self) -> Result<Cycle> {
        let mut path = vec![0u64];
        let mut z = 0u64;
        loop {
            if path.len() as u64 >= self.cap {
                return Err(Error::HorizonExceeded { cap: self.cap });
            }
            let site = self.sampler.sample(&mut self.env_rng);
            z = step_generation(z, site.omega, &mut self.rng)
                .map_err(|e| tag_generation(e, path.len() as u64))?;
            if z == 0 {
                return Ok(Cycle { path });
            }
            path.push(z);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegenSample {
    /// `ν_1 < ν_2 < ...`
    pub nu_list: Vec<u64>,
    pub cycle_sums: Vec<u64>,
}

impl RegenSample {
    /// `N(n) = #{k ≥ 1 : ν_k < n}`.
    pub fn renewals_before(&self, n: u64) -> usize {
        self.nu_list.partition_point(|&v| v < n)
    }

    pub fn cycle_lengths(&self) -> Vec<u64> {
        let mut prev = 0;
        self.nu_list
            .iter()
            .map(|&v| {
                let l = v - prev;
                prev = v;
                l
            })
            .collect()
    }
}

pub fn regenerations(spec: &EnvSpec, n_cycles: usize, stream: RngStream) -> Result<RegenSample> {
    let mut chain = RegenerativeChain::new(spec, stream)?;
    let mut t = 0u64;
    let mut nu_list = Vec::with_capacity(n_cycles);
    let mut cycle_sums = Vec::with_capacity(n_cycles);
    for _ in 0..n_cycles {
        let c = chain.next_cycle()?;
        t += c.len();
        nu_list.push(t);
        cycle_sums.push(c.sum());
    }
    Ok(RegenSample { nu_list, cycle_sums })
}

/// `τ_t = inf{k ≥ 0 : Z_k > t}` on a path starting at a regeneration, or
/// `None` if the path returns to 0 (or ends) first.
pub fn first_passage_tau(path: &[u64], t: u64) -> Option<usize> {
    for (k, &v) in path.iter().enumerate() {
        if v > t {
            return Some(k);
        }
        if k > 0 && v == 0 {
            return None;
        }
    }
    None
}

/// Split of `W_n` by the generation offset of each immigrant's progeny:
/// before, inside and after the window `[n1, n2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDecomposition {
    pub x: f64,
    pub window: DeviationWindow,
    pub n: u64,
    pub total_w: u64,
    pub w0: u64,
    pub w_down: u64,
    pub w_up: u64,
    /// Blocks `𝕎_1 .. 𝕎_{p+1}`; block `k ≤ p` holds immigrants
    /// `(k-1) n1 + 1 ..= k n1`.
    pub blocks: Vec<u64>,
    pub p: u64,
}

impl BlockDecomposition {
    pub fn partition_holds(&self) -> bool {
        self.w0 as u128 + self.w_down as u128 + self.w_up as u128 == self.total_w as u128
    }

    pub fn blocks_hold(&self) -> bool {
        self.blocks.iter().map(|&b| b as u128).sum::<u128>() == self.w0 as u128
    }
}

/// Block decomposition with the window derived from `spec`'s profile.
pub fn decompose_blocks(
    spec: &EnvSpec,
    n: u64,
    x: f64,
    delta: f64,
    stream: RngStream,
) -> Result<BlockDecomposition> {
    let profile = spec.profile()?;
    let window = crate::env_model::deviation_window(&profile, x, delta)?;
    decompose_blocks_in(spec, n, x, window, stream)
}

pub fn decompose_blocks_in(
    spec: &EnvSpec,
    n: u64,
    x: f64,
    window: DeviationWindow,
    stream: RngStream,
) -> Result<BlockDecomposition> {
    spec.ensure_transient()?;
    let n1 = window.n1 as u64;
    let n2 = window.n2 as u64;
    let p = n / n1;
    let sampler = spec.sampler();
    let mut env_rng = stream.substream(role::ENV).rng();
    let mut rng = stream.substream(role::BRANCH).rng();
    let mut blocks = vec![0u64; p as usize + 1];
    let (mut w0, mut w_down, mut w_up, mut total) = (0u64, 0u64, 0u64, 0u64);
    // (immigrant index j, current population); line j is at generation k
    let mut alive: Vec<(u64, u64)> = Vec::new();
    let mut k = 0u64;
    let overflow = |g| Error::PopulationOverflow { generation: g };
    while k < n || !alive.is_empty() {
        if k >= DEFAULT_GENERATION_CAP {
            return Err(Error::HorizonExceeded { cap: DEFAULT_GENERATION_CAP });
        }
        let site = sampler.sample(&mut env_rng);
        for line in alive.iter_mut() {
            line.1 = offspring(line.1, site.omega, &mut rng).map_err(|e| tag_generation(e, k + 1))?;
        }
        if k < n {
            let v = geometric(site.omega, &mut rng);
            if !(v < POP_LIMIT) {
                return Err(overflow(k + 1));
            }
            alive.push((k + 1, v as u64));
        }
        k += 1;
        for &(j, pop) in &alive {
            if pop == 0 {
                continue;
            }
            total = total.checked_add(pop).ok_or(overflow(k))?;
            let offset = k - j;
            if offset < n1 {
                w_down = w_down.checked_add(pop).ok_or(overflow(k))?;
            } else if offset <= n2 {
                w0 = w0.checked_add(pop).ok_or(overflow(k))?;
                let b = ((j - 1) / n1).min(p) as usize;
                blocks[b] = blocks[b].checked_add(pop).ok_or(overflow(k))?;
            } else {
                w_up = w_up.checked_add(pop).ok_or(overflow(k))?;
            }
        }
        alive.retain(|&(_, pop)| pop > 0);
    }
    Ok(BlockDecomposition { x, window, n, total_w: total, w0, w_down, w_up, blocks, p })
}

/// Absolute residual of the exact identity
///
/// `Z̃_{k,n} = Z_{1,k} S_k + Σ_{i=k+1}^{n} (Z_{1,i} - A_{i-1} Z_{1,i-1}) S_i`
///
/// with `Z̃_{k,n} = Σ_{j=k}^{n} Z_{1,j}` and `S_i = 1 + Σ_{j=i}^{n-1} Π_{i,j}`
/// (`Π_{i,j} = A_i ⋯ A_j`), evaluated in double-double arithmetic.
/// Requires tracked lines and `1 ≤ k < n ≤ horizon`.
pub fn lemma2_residual(traj: &BranchTrajectory, k: usize, n: usize) -> Result<f64> {
    if traj.lines.is_none() {
        return Err(Error::Config("trajectory was simulated without lines".into()));
    }
    if !(1 <= k && k < n && n <= traj.horizon) {
        return Err(Error::Config(format!("need 1 <= k < n <= horizon, got k={k}, n={n}")));
    }
    let z = |i: usize| traj.line(1, i).unwrap() as f64;
    // S_n = 1, S_i = 1 + A_i S_{i+1}
    let one = DoubleDouble::from_f64(1.0);
    let mut s = vec![DoubleDouble::default(); n + 1];
    s[n] = one;
    for i in (k..n).rev() {
        s[i] = one + s[i + 1].mul_f64(traj.a[i]);
    }
    let mut lhs = DoubleDouble::default();
    for j in k..=n {
        lhs = lhs + DoubleDouble::from_f64(z(j));
    }
    let mut rhs = s[k].mul_f64(z(k));
    for i in (k + 1)..=n {
        let d = DoubleDouble::from_f64(z(i)) - DoubleDouble::from_f64(z(i - 1)).mul_f64(traj.a[i - 1]);
        rhs = rhs + d * s[i];
    }
    Ok((lhs - rhs).to_f64().abs())
}

/// `Z̃_{k,n}` for line 1.
pub fn line1_partial_total(traj: &BranchTrajectory, k: usize, n: usize) -> Option<u64> {
    (k..=n).map(|j| traj.line(1, j)).sum()
}
