//! Data-parallel execution with a sequential fallback.
//!
//! Every bulk operation in the crate funnels through the helpers here so the
//! parallel and sequential paths produce bit-identical results: maps preserve
//! input order, and reductions are computed per fixed-size chunk and then
//! folded left-to-right. Thread count never changes an output.
//!
//! The `parallel` cargo feature (on by default) enables rayon. Without it,
//! [`Exec::Parallel`] quietly runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of items per reduction chunk. Fixed so results do not depend on
/// how rayon splits work.
pub const CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// `f(i)` for `i in 0..n`, collected in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// `f(item)` for each item, collected in input order.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Per-chunk partial results over `0..n`, in chunk order. `f` receives the
    /// index range of one chunk.
    pub fn map_chunks<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(std::ops::Range<usize>) -> T + Sync + Send,
    {
        let chunks = n.div_ceil(CHUNK);
        self.map_range(chunks, |c| {
            let start = c * CHUNK;
            f(start..(start + CHUNK).min(n))
        })
    }

    /// Order-stable sum of `f(i)` over `0..n`.
    pub fn sum<F>(self, n: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        self.map_chunks(n, |range| range.map(&f).sum::<f64>())
            .into_iter()
            .sum()
    }

    /// Order-stable elementwise sum of `f(range, acc)` contributions into a
    /// vector of length `dim`.
    pub fn sum_vec<F>(self, n: usize, dim: usize, f: F) -> Vec<f64>
    where
        F: Fn(std::ops::Range<usize>, &mut [f64]) + Sync + Send,
    {
        let partials = self.map_chunks(n, |range| {
            let mut acc = vec![0.0; dim];
            f(range, &mut acc);
            acc
        });
        let mut total = vec![0.0; dim];
        for part in partials {
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
        total
    }
}
