//! Execution-mode switch for the data-parallel inner loops.
//!
//! With the `parallel` feature the loops run on the current rayon pool;
//! without it every mode falls back to the sequential path. Each helper
//! writes to fixed output positions, so results never depend on the mode
//! or the pool size.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// True when this mode actually fans out in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Number of worker threads available to [`Execution::Parallel`].
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Runs `op` inside a pool of `threads` workers (0 = hardware default).
pub fn with_threads<R: Send>(threads: usize, op: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(op),
            Err(_) => op(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        op()
    }
}

/// Fills `out` chunk by chunk; `fill` receives the offset of its chunk.
pub fn fill_chunks<T, F>(exec: Execution, out: &mut [T], chunk: usize, fill: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| fill(i * chunk, c));
        return;
    }
    let _ = exec;
    for (i, c) in out.chunks_mut(chunk).enumerate() {
        fill(i * chunk, c);
    }
}

/// Order-preserving map over a slice.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Sorts floats by total order. The sorted sequence is unique, so the mode
/// only changes speed.
pub fn sort_f64(exec: Execution, values: &mut [f64]) {
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        values.par_sort_unstable_by(f64::total_cmp);
        return;
    }
    let _ = exec;
    values.sort_unstable_by(f64::total_cmp);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_chunks_matches_across_modes() {
        let fill = |offset: usize, c: &mut [u64]| {
            for (i, v) in c.iter_mut().enumerate() {
                *v = ((offset + i) as u64).wrapping_mul(2654435761);
            }
        };
        let mut a = vec![0u64; 10_007];
        let mut b = vec![0u64; 10_007];
        fill_chunks(Execution::Sequential, &mut a, 64, fill);
        with_threads(3, || fill_chunks(Execution::Parallel, &mut b, 100, fill));
        assert_eq!(a, b);
    }

    #[test]
    fn map_preserves_order() {
        let items: Vec<u32> = (0..1000).collect();
        let out = map(Execution::Parallel, &items, |x| x * 3);
        assert_eq!(out, items.iter().map(|x| x * 3).collect::<Vec<_>>());
    }
}
