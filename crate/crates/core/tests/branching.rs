use rwre_core::branching::{
    decompose_blocks, first_passage_tau, lemma2_residual, line1_partial_total, offspring_pmf, regenerations,
    simulate_line, simulate_z, step_generation, total_progeny_w, RegenerativeChain,
};
use rwre_core::parallel::map_replicas;
use rwre_core::rng::role;
use rwre_core::stats::{chi_square_critical, chi_square_gof, correlation, ols, proportion, MeanAcc};
use rwre_core::{EnvSpec, RngStream};

fn beta31() -> EnvSpec {
    EnvSpec::beta(3.0, 1.0).unwrap()
}

#[test]
fn offspring_law_passes_chi_square() {
    for (i, (z, omega)) in [(0u64, 0.5), (3, 0.3), (10, 0.8)].into_iter().enumerate() {
        let mut rng = RngStream::new(21, i as u64).rng();
        let draws: Vec<u64> = (0..1_000_000).map(|_| step_generation(z, omega, &mut rng).unwrap()).collect();
        let (stat, dof) = chi_square_gof(&draws, |l| offspring_pmf(z + 1, omega, l));
        let crit = chi_square_critical(0.001, dof);
        assert!(stat < crit, "(z={z}, omega={omega}): {stat} >= {crit} on {dof} dof");
    }
}

#[test]
fn negative_binomial_pmf_is_a_geometric_convolution() {
    let omega: f64 = 0.7;
    let geo: Vec<f64> = (0..=20).map(|l| omega * (1.0 - omega).powi(l)).collect();
    let conv = |a: &[f64], b: &[f64]| -> Vec<f64> {
        (0..=20).map(|l| (0..=l).map(|j| a[j] * b[l - j]).sum()).collect()
    };
    let three = conv(&conv(&geo, &geo), &geo);
    for (l, &p) in three.iter().enumerate() {
        assert!((offspring_pmf(3, omega, l as u64) - p).abs() < 1e-12, "l={l}");
    }
    assert_eq!(offspring_pmf(0, omega, 0), 1.0);
}

#[test]
fn mean_population_follows_geometric_series() {
    let spec = EnvSpec::deterministic(0.5).unwrap();
    let root = RngStream::new(22, 0);
    let n = 12;
    let trajs = map_replicas(1, 10_000, |r| Ok(simulate_z(&spec, n, root.replica(r), false, false)?.z)).unwrap();
    for k in 1..=n {
        let acc: MeanAcc = trajs.iter().map(|z| z[k] as f64).collect();
        let y = 1.0 - 0.5f64.powi(k as i32);
        assert!((acc.mean() - y).abs() < 3.0 * acc.se(), "k={k}: {} vs {y}", acc.mean());
    }
}

#[test]
fn mean_total_progeny() {
    let spec = beta31();
    let root = RngStream::new(23, 0);
    let n = 50;
    let acc: MeanAcc =
        map_replicas(1, 10_000, |r| Ok(total_progeny_w(&spec, n, root.replica(r))? as f64)).unwrap().into_iter().collect();
    let rho = spec.mean_a();
    let expected = n as f64 * rho / (1.0 - rho);
    assert!((acc.mean() - expected).abs() < 3.0 * acc.se(), "{} ± {} vs {expected}", acc.mean(), acc.se());
}

fn first_cycles(spec: &EnvSpec, seed: u64, reps: u64) -> Vec<Vec<u64>> {
    let root = RngStream::new(seed, 0);
    map_replicas(1, reps, |r| Ok(RegenerativeChain::new(spec, root.replica(r))?.next_cycle()?.path)).unwrap()
}

#[test]
fn first_generation_probabilities() {
    let spec = beta31();
    let reps = 100_000;
    let cycles = first_cycles(&spec, 24, reps);
    let mean_omega = spec.mean_omega();
    let (p1, se1) = proportion(cycles.iter().filter(|c| c.len() == 1).count() as u64, reps);
    assert!((p1 - mean_omega).abs() < 3.0 * se1, "P(nu=1) {p1} vs {mean_omega}");
    let (p0, se0) = proportion(cycles.iter().filter(|c| first_passage_tau(c, 0) == Some(1)).count() as u64, reps);
    assert!((p0 - (1.0 - mean_omega)).abs() < 3.0 * se0, "P(tau_0=1) {p0}");
}

#[test]
fn first_passage_is_monotone_in_level() {
    for path in first_cycles(&beta31(), 25, 20_000) {
        let taus: Vec<Option<usize>> = (0..40).map(|t| first_passage_tau(&path, t)).collect();
        for t in 0..40 {
            for u in t..40 {
                if let (Some(a), Some(b)) = (taus[t], taus[u]) {
                    assert!(a <= b);
                }
            }
        }
    }
}

#[test]
fn regeneration_time_has_decaying_tail() {
    // P(nu > 20) is about 1e-6, so stream the cycles rather than store them
    let cycles = 20_000_000u64;
    let mut chain = RegenerativeChain::new(&beta31(), RngStream::new(26, 0)).unwrap();
    let mut survive = [0u64; 16];
    for _ in 0..cycles {
        let len = chain.next_cycle().unwrap().len();
        assert!(len >= 1);
        for (k, c) in (5u64..=20).zip(survive.iter_mut()) {
            *c += u64::from(len > k);
        }
    }
    let ks: Vec<f64> = (5..=20).map(f64::from).collect();
    let logs: Vec<f64> = survive.iter().map(|&c| (c as f64 / cycles as f64).ln()).collect();
    assert!(survive[15] >= 10, "{survive:?}");
    assert!(ols(&ks, &logs).slope < 0.0);
}

#[test]
fn consecutive_cycle_sums_are_uncorrelated() {
    let root = RngStream::new(27, 0);
    let reps = 10_000;
    let pairs = map_replicas(1, reps, |r| {
        let s = regenerations(&beta31(), 2, root.replica(r))?;
        Ok((s.cycle_sums[0] as f64, s.cycle_sums[1] as f64))
    })
    .unwrap();
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let r = correlation(&a, &b);
    assert!(r.abs() < 3.0 / (reps as f64).sqrt(), "{r}");
}

#[test]
fn distant_blocks_are_uncorrelated() {
    let spec = beta31();
    let root = RngStream::new(28, 0);
    let reps = 10_000;
    let pairs = map_replicas(1, reps, |r| {
        let b = decompose_blocks(&spec, 50, 15f64.exp(), 0.1, root.replica(r))?;
        assert!(b.partition_holds() && b.blocks_hold());
        Ok((b.blocks[0] as f64, b.blocks[3] as f64))
    })
    .unwrap();
    let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    assert!(a.iter().filter(|&&v| v > 0.0).count() > 100);
    let r = correlation(&a, &b);
    assert!(r.abs() < 3.0 / (reps as f64).sqrt(), "{r}");
}

#[test]
fn line_moments_stay_in_geometric_band() {
    let spec = beta31();
    let alpha = spec.solve_alpha().unwrap();
    let root = RngStream::new(29, 0);
    let horizon = 15;
    let lines = map_replicas(1, 100_000, |r| simulate_line(&spec, horizon, root.replica(r))).unwrap();
    let lambda_half = spec.lambda(alpha / 2.0).unwrap();
    let mean_a = spec.mean_a();
    for k in 1..=horizon {
        // s = α/2 = 1: the mean is exactly (E A)^k; survivors get too rare to test it past k = 8
        let half: MeanAcc = lines.iter().map(|l| (l[k - 1] as f64).powf(alpha / 2.0)).collect();
        let exact = mean_a.powi(k as i32);
        if k <= 8 {
            assert!((half.mean() - exact).abs() < 3.0 * half.se(), "k={k}: {} vs {exact}", half.mean());
        }
        assert!(half.mean() - 3.0 * half.se() <= 3.0 * lambda_half.powi(k as i32), "s=alpha/2, k={k}");
        // λ(α) = 1, so the envelope at s = α is a constant; E Z_{1,k}^2 increases to 4 here
        let full: MeanAcc = lines.iter().map(|l| (l[k - 1] as f64).powf(alpha)).collect();
        assert!(full.mean() - 3.0 * full.se() <= 5.0, "s=alpha, k={k}: {}", full.mean());
    }
}

#[test]
fn lemma2_identity_on_random_trajectories() {
    for spec in [beta31(), EnvSpec::two_point(2.0, 0.25, 0.5).unwrap()] {
        for r in 0..2000 {
            let t = simulate_z(&spec, 10, RngStream::new(30, r), true, true).unwrap();
            let total = line1_partial_total(&t, 3, 10).unwrap() as f64;
            assert!(lemma2_residual(&t, 3, 10).unwrap() <= 1e-9 * (1.0 + total));
        }
    }
}

#[test]
fn line_uses_the_branch_role() {
    let spec = beta31();
    let s = RngStream::new(31, 4);
    assert_eq!(simulate_line(&spec, 20, s).unwrap(), simulate_line(&spec, 20, s).unwrap());
    assert_ne!(s.substream(role::ENV), s.substream(role::BRANCH));
}
