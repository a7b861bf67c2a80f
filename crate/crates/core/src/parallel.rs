//! Replica-parallel execution with deterministic, order-preserving reduction.
//!
//! Replicas are grouped into fixed-size chunks independent of the worker
//! count; each chunk is folded sequentially and the chunk results are merged
//! in chunk order. Floating-point reductions are therefore bit-identical for
//! any number of workers.

use rayon::prelude::*;

use crate::error::Result;

pub const CHUNK: u64 = 1024;

fn with_pool<R: Send>(workers: usize, job: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return job();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}

/// Evaluate `f(replica)` for every replica, returning results in replica order.
/// `workers == 0` uses the global rayon pool.
pub fn map_replicas<T, F>(workers: usize, replicas: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    with_pool(workers, || (0..replicas).into_par_iter().map(&f).collect())
}

/// Fold replicas into an accumulator: `fold(acc, replica)` inside a chunk,
/// `merge` across chunks in order.
pub fn reduce_replicas<A, I, F, M>(workers: usize, replicas: u64, init: I, fold: F, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, u64) -> Result<()> + Sync,
    M: Fn(A, A) -> A,
{
    let chunks = replicas.div_ceil(CHUNK);
    let parts: Result<Vec<A>> = with_pool(workers, || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = init();
                let end = ((c + 1) * CHUNK).min(replicas);
                for r in c * CHUNK..end {
                    fold(&mut acc, r)?;
                }
                Ok(acc)
            })
            .collect()
    });
    let mut it = parts?.into_iter();
    let first = it.next().unwrap_or_else(&init);
    Ok(it.fold(first, merge))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_independent_of_workers() {
        let run = |w| {
            reduce_replicas(
                w,
                10_000,
                || 0.0f64,
                |acc, r| {
                    *acc += (r as f64).sqrt().sin();
                    Ok(())
                },
                |a, b| a + b,
            )
            .unwrap()
        };
        let a = run(1);
        assert_eq!(a.to_bits(), run(4).to_bits());
        assert_eq!(a.to_bits(), run(8).to_bits());
    }

    #[test]
    fn map_preserves_order() {
        let v = map_replicas(3, 100, |r| Ok(r * 2)).unwrap();
        assert_eq!(v, (0..100).map(|r| r * 2).collect::<Vec<_>>());
    }
}
