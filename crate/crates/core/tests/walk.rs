use rwre_core::branching::total_progeny_w;
use rwre_core::parallel::map_replicas;
use rwre_core::stats::{ks_critical, ks_two_sample, ols, MeanAcc};
use rwre_core::walk_sim::{annealed_env, longest_excursion, position_after, run_until_hit};
use rwre_core::{EnvSpec, RngStream};

const REPS: u64 = 10_000;

fn half() -> EnvSpec {
    EnvSpec::deterministic(0.5).unwrap()
}

#[test]
fn mean_hitting_time_of_homogeneous_walk() {
    let root = RngStream::new(11, 0);
    let t = map_replicas(1, REPS, |r| {
        let (mut env, walk) = annealed_env(&half(), root.replica(r))?;
        Ok(run_until_hit(&mut env, 100, walk)?.t_n as f64)
    })
    .unwrap();
    let acc: MeanAcc = t.into_iter().collect();
    assert!((acc.mean() - 300.0).abs() < 3.0 * acc.se(), "{} ± {}", acc.mean(), acc.se());
}

#[test]
fn speed_of_homogeneous_walk() {
    let root = RngStream::new(12, 0);
    let n = 1000;
    let xs = map_replicas(1, REPS, |r| {
        let (mut env, walk) = annealed_env(&half(), root.replica(r))?;
        Ok(position_after(&mut env, n, walk) as f64 / n as f64)
    })
    .unwrap();
    let acc: MeanAcc = xs.into_iter().collect();
    assert!((acc.mean() - 1.0 / 3.0).abs() < 3.0 * acc.se(), "{} ± {}", acc.mean(), acc.se());
}

fn excursion_depths(spec: &EnvSpec, seed: u64, reps: u64) -> Vec<u64> {
    let root = RngStream::new(seed, 0);
    map_replicas(1, reps, |r| {
        let (mut env, walk) = annealed_env(spec, root.replica(r))?;
        let ex = longest_excursion(&mut env, 5, 2000, walk)?;
        assert!(ex.l_j as i64 <= ex.j - ex.min_site);
        Ok(ex.l_j)
    })
    .unwrap()
}

#[test]
fn first_backtrack_has_gamblers_ruin_probability() {
    let depths = excursion_depths(&half(), 13, REPS);
    let p = depths.iter().filter(|&&l| l >= 1).count() as f64 / REPS as f64;
    let se = (p * (1.0 - p) / REPS as f64).sqrt();
    assert!((p - 0.5).abs() < 3.0 * se, "{p}");
}

fn survival_slope(depths: &[u64]) -> (Vec<f64>, f64) {
    let n = depths.len() as f64;
    let ks: Vec<f64> = (1..=10).map(f64::from).collect();
    let logs: Vec<f64> = ks
        .iter()
        .map(|&k| (depths.iter().filter(|&&l| l as f64 > k).count() as f64 / n).ln())
        .collect();
    (logs.clone(), ols(&ks, &logs).slope)
}

#[test]
fn backtrack_depth_decays_geometrically() {
    for (spec, seed) in [(half(), 14), (EnvSpec::beta(3.0, 1.0).unwrap(), 15)] {
        let depths = excursion_depths(&spec, seed, 200_000);
        let (logs, slope) = survival_slope(&depths);
        assert!(logs.iter().all(|l| l.is_finite()), "{logs:?}");
        assert!(logs.windows(2).all(|w| w[1] < w[0]), "{logs:?}");
        let rho = spec.mean_a();
        assert!(slope <= rho.ln() + 0.1, "slope {slope} vs log rho {}", rho.ln());
    }
}

#[test]
fn hitting_time_matches_branching_encoding() {
    let spec = EnvSpec::beta(3.0, 1.0).unwrap();
    let n = 50;
    let walk_root = RngStream::new(16, 0);
    let w_root = RngStream::new(16, 1);
    let t = map_replicas(1, REPS, |r| {
        let (mut env, walk) = annealed_env(&spec, walk_root.replica(r))?;
        Ok(run_until_hit(&mut env, n, walk)?.t_n as f64)
    })
    .unwrap();
    let enc = map_replicas(1, REPS, |r| Ok(2.0 * total_progeny_w(&spec, n, w_root.replica(r))? as f64 + n as f64))
        .unwrap();
    let a: MeanAcc = t.iter().copied().collect();
    let b: MeanAcc = enc.iter().copied().collect();
    let combined = (a.se().powi(2) + b.se().powi(2)).sqrt();
    assert!((a.mean() - b.mean()).abs() < 3.0 * combined, "{} vs {}", a.mean(), b.mean());
    let d = ks_two_sample(&t, &enc);
    assert!(d < ks_critical(0.001, REPS as usize, REPS as usize), "KS {d}");
}
