//! Ordered parallel trace engine.
//!
//! Traces are generated and pre-processed concurrently in fixed-size index
//! chunks, then folded strictly in trace-index order. Because each trace is a
//! pure function of `(config, index)` and the fold order never depends on
//! scheduling, results are bit-identical for every thread count.

use rayon::prelude::*;
use rectdyne_core::protocols::{TraceGenerator, TraceHeader};

use crate::error::{CliError, CliResult};

/// Indices handed to the pool per round.
const CHUNK: usize = 256;

/// When to stop consuming traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    /// Consume trace indices `0..n`.
    Generated(usize),
    /// Consume indices until `n` kept traces were folded, giving up after `cap` indices.
    Kept { n: usize, cap: usize },
}

/// Counters of a finished engine pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub generated: usize,
    pub kept: usize,
}

pub struct Engine {
    pool: rayon::ThreadPool,
}

impl Engine {
    /// `threads = None` uses rayon's default (one per core).
    pub fn new(threads: Option<usize>) -> CliResult<Self> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            if t == 0 {
                return Err(CliError::config("--threads: must be at least 1"));
            }
            b = b.num_threads(t);
        }
        let pool = b
            .build()
            .map_err(|e| CliError::config(format!("--threads: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `f(0), f(1), ..., f(n - 1)` evaluated in parallel, returned in index order.
    pub fn map_ordered<T: Send>(&self, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }

    /// Runs `work(header, counts)` in parallel for every consumed trace that is
    /// kept (or every trace when `all_counts`), then calls `fold` sequentially
    /// in index order. Discarded traces reach `fold` with `None` unless
    /// `all_counts` is set.
    pub fn run<T, W, F>(&self, gen: &TraceGenerator, stop: Stop, all_counts: bool, work: W, mut fold: F) -> CliResult<Progress>
    where
        T: Send,
        W: Fn(&TraceHeader, &[f64]) -> T + Sync,
        F: FnMut(&TraceHeader, Option<T>) -> CliResult<()>,
    {
        let mut progress = Progress { generated: 0, kept: 0 };
        let mut next = 0usize;
        loop {
            let (end, target_kept) = match stop {
                Stop::Generated(n) => (n, None),
                Stop::Kept { n, cap } => {
                    if progress.kept >= n {
                        return Ok(progress);
                    }
                    if next >= cap {
                        return Err(CliError::Numerical(format!(
                            "only {} of {n} requested kept traces after {cap} generated",
                            progress.kept
                        )));
                    }
                    (cap, Some(n))
                }
            };
            if next >= end {
                return Ok(progress);
            }
            let hi = end.min(next + CHUNK);
            let batch: Vec<(TraceHeader, Option<T>)> = self.pool.install(|| {
                (next..hi)
                    .into_par_iter()
                    .map_init(Vec::new, |buf, i| {
                        let header = gen.header(i as u64);
                        let out = if header.kept || all_counts {
                            gen.counts_into(&header, buf);
                            Some(work(&header, buf))
                        } else {
                            None
                        };
                        (header, out)
                    })
                    .collect()
            });
            for (header, out) in batch {
                if target_kept.is_some_and(|n| progress.kept >= n) {
                    return Ok(progress);
                }
                progress.generated += 1;
                if header.kept {
                    progress.kept += 1;
                }
                fold(&header, out)?;
            }
            next = hi;
        }
    }
}
