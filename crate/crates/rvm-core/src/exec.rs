//! Execution backend: data-parallel kernels with a deterministic sequential path.
//!
//! With the `parallel` feature (default) the helpers below dispatch to rayon;
//! without it they compile to plain loops with identical semantics. A runtime
//! override forces the sequential path inside a parallel build so both paths
//! can be compared in one binary. Every helper is a pure element-wise map or
//! a disjoint-chunk mutation, so results are bitwise identical for any worker
//! count; reductions are left to callers, which sum buffers in index order.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Once;

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);
static POOL_INIT: Once = Once::new();

/// Force (or release) the sequential code path at run time.
pub fn set_sequential_override(on: bool) {
    FORCE_SEQUENTIAL.store(on, Ordering::SeqCst);
}

/// True when calls will actually run on the rayon pool.
pub fn parallel_active() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::SeqCst)
}

/// Install the global worker pool, honouring `RVM_WORKERS` or an explicit
/// count from the config. Zero / absent means "all cores". Safe to call more
/// than once; the first call wins.
pub fn install_workers(configured: Option<usize>) {
    POOL_INIT.call_once(|| {
        let n = std::env::var("RVM_WORKERS")
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .or(configured)
            .unwrap_or(0);
        #[cfg(feature = "parallel")]
        if n > 0 {
            // Ignore the error: a pool may already exist (e.g. under a test
            // harness); the override then has no effect, which is harmless.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        #[cfg(not(feature = "parallel"))]
        let _ = n;
    });
}

/// Map `f` over `items`, preserving order.
pub fn map<T: Sync, U: Send, F: Fn(&T) -> U + Sync + Send>(items: &[T], f: F) -> Vec<U> {
    #[cfg(feature = "parallel")]
    if parallel_active() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    items.iter().map(f).collect()
}

/// Map `f` over `0..n`, preserving order.
pub fn map_indexed<U: Send, F: Fn(usize) -> U + Sync + Send>(n: usize, f: F) -> Vec<U> {
    #[cfg(feature = "parallel")]
    if parallel_active() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Apply `f` to disjoint chunks of `data` of length `chunk` (last may be
/// short). `f` receives the chunk index; chunk `k` starts at `k * chunk`.
pub fn for_each_chunk_mut<T: Send, F: Fn(usize, &mut [T]) + Sync + Send>(
    data: &mut [T],
    chunk: usize,
    f: F,
) {
    assert!(chunk > 0);
    #[cfg(feature = "parallel")]
    if parallel_active() {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(k, c)| f(k, c));
        return;
    }
    for (k, c) in data.chunks_mut(chunk).enumerate() {
        f(k, c);
    }
}

/// Update `out[i] = f(i)` in place (disjoint writes), preserving length.
pub fn fill_indexed<T: Send, F: Fn(usize) -> T + Sync + Send>(out: &mut [T], f: F) {
    #[cfg(feature = "parallel")]
    if parallel_active() {
        use rayon::prelude::*;
        out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
        return;
    }
    for (i, v) in out.iter_mut().enumerate() {
        *v = f(i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_matches_sequential_override() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.1).collect();
        let par = map(&xs, |x| (x.sin() * 1e6).mul_add(3.0, x.sqrt()));
        set_sequential_override(true);
        let seq = map(&xs, |x| (x.sin() * 1e6).mul_add(3.0, x.sqrt()));
        set_sequential_override(false);
        assert_eq!(par, seq); // bitwise
    }

    #[test]
    fn chunk_mutation_is_disjoint_and_ordered() {
        let mut data = vec![0usize; 100];
        for_each_chunk_mut(&mut data, 7, |k, c| {
            for (j, v) in c.iter_mut().enumerate() {
                *v = k * 1000 + j;
            }
        });
        for (i, v) in data.iter().enumerate() {
            assert_eq!(*v, (i / 7) * 1000 + i % 7);
        }
    }

    #[test]
    fn fill_indexed_writes_every_slot() {
        let mut out = vec![0.0f64; 257];
        fill_indexed(&mut out, |i| i as f64 + 0.5);
        assert!(out.iter().enumerate().all(|(i, v)| *v == i as f64 + 0.5));
    }
}
