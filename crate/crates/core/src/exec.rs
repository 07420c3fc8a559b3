//! Execution policy for data-parallel loops.
//!
//! Work is split into fixed-size chunks. With the `parallel` feature the chunks
//! are distributed over a rayon pool of the requested size; without it (or
//! with `threads <= 1`) they run in order on the calling thread. Chunk
//! boundaries never influence results: every element is processed by a pure
//! function of its own state.

#[cfg(feature = "parallel")]
use std::collections::HashMap;
#[cfg(feature = "parallel")]
use std::sync::{Arc, Mutex, OnceLock};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Default number of cells per work unit.
pub const DEFAULT_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Execution {
    /// Worker threads; 0 or 1 means sequential.
    pub threads: usize,
    /// Elements per work unit.
    pub chunk: usize,
}

impl Default for Execution {
    fn default() -> Self {
        Self::sequential()
    }
}

impl Execution {
    pub fn sequential() -> Self {
        Self {
            threads: 1,
            chunk: DEFAULT_CHUNK,
        }
    }

    pub fn threads(threads: usize) -> Self {
        Self {
            threads,
            chunk: DEFAULT_CHUNK,
        }
    }

    /// All available cores.
    pub fn all_cores() -> Self {
        Self::threads(available_threads())
    }

    pub fn with_chunk(mut self, chunk: usize) -> Self {
        self.chunk = chunk.max(1);
        self
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && self.threads > 1
    }

    /// Process `a` and `b` in lock-step chunks of `chunk` and `chunk * stride`
    /// elements. `f` receives the index of the first element of the chunk.
    pub fn zip_chunks_mut<A, B, F>(&self, a: &mut [A], b: &mut [B], stride: usize, f: F)
    where
        A: Send,
        B: Send,
        F: Fn(usize, &mut [A], &mut [B]) + Sync + Send,
    {
        let chunk = self.chunk.max(1);
        debug_assert_eq!(a.len() * stride, b.len());
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            let run = || {
                if stride == 0 {
                    a.par_chunks_mut(chunk)
                        .enumerate()
                        .for_each(|(k, ca)| f(k * chunk, ca, &mut []));
                } else {
                    a.par_chunks_mut(chunk)
                        .zip(b.par_chunks_mut(chunk * stride))
                        .enumerate()
                        .for_each(|(k, (ca, cb))| f(k * chunk, ca, cb));
                }
            };
            pool(self.threads).install(run);
            return;
        }
        if stride == 0 {
            for (k, ca) in a.chunks_mut(chunk).enumerate() {
                f(k * chunk, ca, &mut []);
            }
        } else {
            for (k, (ca, cb)) in a
                .chunks_mut(chunk)
                .zip(b.chunks_mut(chunk * stride))
                .enumerate()
            {
                f(k * chunk, ca, cb);
            }
        }
    }

    /// Read `src` and write `out` in matching chunks.
    pub fn map_chunks<A, B, F>(&self, src: &[A], out: &mut [B], f: F)
    where
        A: Sync,
        B: Send,
        F: Fn(usize, &[A], &mut [B]) + Sync + Send,
    {
        let chunk = self.chunk.max(1);
        debug_assert_eq!(src.len(), out.len());
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            pool(self.threads).install(|| {
                src.par_chunks(chunk)
                    .zip(out.par_chunks_mut(chunk))
                    .enumerate()
                    .for_each(|(k, (s, o))| f(k * chunk, s, o));
            });
            return;
        }
        for (k, (s, o)) in src.chunks(chunk).zip(out.chunks_mut(chunk)).enumerate() {
            f(k * chunk, s, o);
        }
    }

    /// Apply `f` to every index in `0..n` and collect the results in order.
    pub fn map_indices<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return pool(self.threads).install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }
}

pub fn available_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[cfg(feature = "parallel")]
fn pool(threads: usize) -> Arc<rayon::ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let pools = POOLS.get_or_init(Default::default);
    let mut guard = pools.lock().unwrap_or_else(|e| e.into_inner());
    guard
        .entry(threads)
        .or_insert_with(|| {
            Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .thread_name(move |i| format!("ssyn-{threads}-{i}"))
                    .build()
                    .expect("failed to build thread pool"),
            )
        })
        .clone()
}
