//! Exact pathwise identities between the walk and its branching encoding,
//! and two-sample checks of the distributional ones.

use crate::branching::{decompose_blocks_in, lemma2_residual, line1_partial_total, simulate_z, total_progeny_w};
use crate::env_model::deviation_window;
use crate::error::Result;
use crate::parallel::map_replicas;
use crate::rng::RngStream;
use crate::stats::{ks_critical, ks_two_sample, MeanAcc};
use crate::walk_sim::{annealed_env, run_until_hit_capped};

use super::config::{Experiment, ExperimentConfig};
use super::report::{ExperimentReport, ReportRow};

/// Relative tolerance for the branching identity evaluated in floating point.
pub const LEMMA2_TOL: f64 = 1e-9;
/// Level of the two-sample tests.
pub const KS_LEVEL: f64 = 0.001;
/// `log x` of the default block-decomposition threshold.
pub const DEFAULT_IDENTITY_LOG_X: f64 = 15.0;

struct Replica {
    t_n: f64,
    sum_u: f64,
    bookkeeping: bool,
    partition: Option<bool>,
    blocks: Option<bool>,
    lines: bool,
    lemma2: bool,
}

pub fn run_identities(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let env = &cfg.env;
    env.ensure_transient()?;
    let x = cfg.identity_x.unwrap_or(DEFAULT_IDENTITY_LOG_X.exp());
    let mut report = ExperimentReport::new(Experiment::Identities);
    let window = match env.profile().and_then(|p| deviation_window(&p, x, cfg.delta)) {
        Ok(w) => Some(w),
        Err(e) => {
            report.notes.push(format!("block identities skipped: {e}"));
            None
        }
    };
    let reps = cfg.replicas;
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let root = RngStream::new(cfg.seed, 0).substream(i as u64 + 1);
        let walk_root = root.substream(1);
        let block_root = root.substream(2);
        let line_root = root.substream(3);
        let w_root = root.substream(4);
        let sims = map_replicas(workers, reps, |r| {
            let (mut qe, walk) = annealed_env(env, walk_root.replica(r))?;
            let hit = run_until_hit_capped(&mut qe, n, walk, cfg.step_cap)?;
            let (partition, blocks) = match window {
                Some(w) => {
                    let b = decompose_blocks_in(env, n, x, w, block_root.replica(r))?;
                    (Some(b.partition_holds()), Some(b.blocks_hold()))
                }
                None => (None, None),
            };
            let traj = simulate_z(env, n as usize, line_root.replica(r), true, false)?;
            let mut lemma2 = true;
            for k in 1..n as usize {
                let res = lemma2_residual(&traj, k, n as usize)?;
                let scale = line1_partial_total(&traj, k, n as usize).unwrap_or(0).max(1) as f64;
                lemma2 &= res / scale <= LEMMA2_TOL;
            }
            Ok(Replica {
                t_n: hit.t_n as f64,
                sum_u: hit.steps_left_total as f64,
                bookkeeping: hit.bookkeeping_residual() == 0,
                partition,
                blocks,
                lines: traj.lines_add_up() == Some(true),
                lemma2,
            })
        })?;
        let w = map_replicas(workers, reps, |r| Ok(total_progeny_w(env, n, w_root.replica(r))? as f64))?;

        let mut exact = |name: &str, ok: Vec<bool>| {
            let violations = ok.iter().filter(|&&b| !b).count() as f64;
            let mut row = ReportRow::new(Experiment::Identities, n, x, violations, 0.0, 1.0, ok.len() as u64);
            row.flag(format!("identity={name}"));
            let pass = violations == 0.0;
            row.flag(if pass { "pass" } else { "fail" });
            report.rows.push(row);
            report.checks.insert(format!("{name}_n{n}"), pass);
        };
        exact("t_n_bookkeeping", sims.iter().map(|s| s.bookkeeping).collect());
        if window.is_some() {
            exact("w_partition", sims.iter().map(|s| s.partition == Some(true)).collect());
            exact("block_sums", sims.iter().map(|s| s.blocks == Some(true)).collect());
        }
        exact("lines_add_up", sims.iter().map(|s| s.lines).collect());
        exact("lemma2_residual", sims.iter().map(|s| s.lemma2).collect());

        let crit = ks_critical(KS_LEVEL, reps as usize, reps as usize);
        let t: Vec<f64> = sims.iter().map(|s| s.t_n).collect();
        let two_w: Vec<f64> = w.iter().map(|w| 2.0 * w + n as f64).collect();
        let u: Vec<f64> = sims.iter().map(|s| s.sum_u).collect();
        for (name, a, b) in [("ks_t_n_vs_2w_plus_n", &t, &two_w), ("ks_sum_u_vs_w", &u, &w)] {
            let d = ks_two_sample(a, b);
            let mut row = ReportRow::new(Experiment::Identities, n, x, d, 0.0, crit, reps);
            row.flag(format!("identity={name}"));
            let pass = d < crit;
            row.flag(if pass { "pass" } else { "fail" });
            report.rows.push(row);
            report.checks.insert(format!("{name}_n{n}"), pass);
        }

        let rho = env.mean_a();
        if rho < 1.0 {
            let acc: MeanAcc = w.iter().copied().collect();
            let expected = n as f64 * rho / (1.0 - rho);
            let mut row = ReportRow::new(Experiment::Identities, n, x, acc.mean(), acc.se(), expected, reps);
            row.flag("identity=mean_w");
            let pass = (acc.mean() - expected).abs() < 3.0 * acc.se();
            row.flag(if pass { "pass" } else { "fail" });
            report.rows.push(row);
            report.checks.insert(format!("mean_w_n{n}"), pass);
        }
    }
    Ok(report)
}
