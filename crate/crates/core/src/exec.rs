//! Replica executor.
//!
//! Replicas are split into fixed-size chunks. Each chunk is folded
//! sequentially; chunk results are merged in chunk order. The partition does
//! not depend on the thread count, so parallel and sequential runs give
//! bit-identical reductions.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Replicas per chunk.
pub const CHUNK: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Runtime {
    Sequential,
    #[default]
    Parallel,
}

impl Runtime {
    /// `Parallel` degrades to `Sequential` when built without the `parallel` feature.
    pub fn effective(self) -> Runtime {
        if cfg!(feature = "parallel") {
            self
        } else {
            Runtime::Sequential
        }
    }
}

fn chunks(n: u64) -> Vec<(u64, u64)> {
    (0..n.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n)))
        .collect()
}

/// Fold replicas `0..n` into accumulators created by `init`, then merge.
pub fn map_reduce<A, I, F, M>(runtime: Runtime, n: u64, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, u64) + Sync,
    M: Fn(&mut A, A),
{
    let run_chunk = |&(lo, hi): &(u64, u64)| {
        let mut acc = init();
        for i in lo..hi {
            fold(&mut acc, i);
        }
        acc
    };
    let parts = chunks(n);
    let partials: Vec<A> = match runtime.effective() {
        Runtime::Sequential => parts.iter().map(run_chunk).collect(),
        #[cfg(feature = "parallel")]
        Runtime::Parallel => parts.par_iter().map(run_chunk).collect(),
        #[cfg(not(feature = "parallel"))]
        Runtime::Parallel => unreachable!("effective() maps Parallel to Sequential"),
    };
    let mut total = init();
    for p in partials {
        merge(&mut total, p);
    }
    total
}

/// Map replicas `0..n` to values, preserving replica order.
pub fn map_collect<T, F>(runtime: Runtime, n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    map_reduce(
        runtime,
        n,
        Vec::new,
        |acc: &mut Vec<T>, i| acc.push(f(i)),
        |acc, mut part| acc.append(&mut part),
    )
}

/// Cap the global worker pool; a no-op without the `parallel` feature.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runtimes_agree_bitwise() {
        let n = 5 * CHUNK + 17;
        let f = |i: u64| ((i as f64) * 0.731).sin() * 1e-3;
        let seq = map_reduce(Runtime::Sequential, n, || 0.0, |a, i| *a += f(i), |a, b| *a += b);
        let par = map_reduce(Runtime::Parallel, n, || 0.0, |a, i| *a += f(i), |a, b| *a += b);
        assert_eq!(seq.to_bits(), par.to_bits());
    }

    #[test]
    fn collect_preserves_order() {
        let v = map_collect(Runtime::Parallel, 3000, |i| i * 2);
        assert_eq!(v.len(), 3000);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i as u64));
        assert!(map_collect(Runtime::Sequential, 0, |i| i).is_empty());
    }
}
