//! Deterministic block-parallel reduction over realization indices.
//!
//! Indices are grouped into fixed blocks (`[k·B, (k+1)·B)`, independent of
//! the worker count). Each block is reduced sequentially into its own
//! accumulator, and block accumulators are handed back strictly in block
//! order. The caller's fold therefore sees the same sequence of additions
//! for any pool size, which makes results bit-identical.

use std::ops::Range;

use crate::error::Result;

/// Realizations per block.
pub const BLOCK_SIZE: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Thread pool with this many workers (0 = available parallelism).
    Parallel(usize),
}

impl Execution {
    pub fn from_workers(workers: usize) -> Self {
        if workers == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel(workers)
        }
    }

    pub fn workers(&self) -> usize {
        match *self {
            Execution::Sequential => 1,
            Execution::Parallel(0) => std::thread::available_parallelism().map_or(1, |n| n.get()),
            Execution::Parallel(w) => w,
        }
    }
}

impl Default for Execution {
    fn default() -> Self {
        Execution::Parallel(0)
    }
}

/// Block boundaries covering `range`, aligned to multiples of `block`.
pub fn blocks(range: Range<u64>, block: u64) -> Vec<Range<u64>> {
    let block = block.max(1);
    let mut out = Vec::new();
    let mut s = range.start;
    while s < range.end {
        let e = ((s / block + 1) * block).min(range.end);
        out.push(s..e);
        s = e;
    }
    out
}

/// Runs `process` for every index in `range`, one accumulator per block, and
/// passes each finished block accumulator to `on_block` in block order
/// together with the end index of the block.
pub fn run_blocks<W, A>(
    exec: Execution,
    range: Range<u64>,
    block: u64,
    make_worker: impl Fn() -> Result<W> + Sync,
    make_acc: impl Fn() -> A + Sync,
    process: impl Fn(&mut W, &mut A, u64) -> Result<()> + Sync,
    mut on_block: impl FnMut(A, u64) -> Result<()>,
) -> Result<()>
where
    W: Send,
    A: Send,
{
    let all = blocks(range, block);
    let reduce = |w: &mut W, r: &Range<u64>| -> Result<A> {
        let mut acc = make_acc();
        for i in r.clone() {
            process(w, &mut acc, i)?;
        }
        Ok(acc)
    };

    let workers = exec.workers();
    if workers <= 1 || all.len() <= 1 {
        let mut w = make_worker()?;
        for r in &all {
            let acc = reduce(&mut w, r)?;
            on_block(acc, r.end)?;
        }
        return Ok(());
    }
    parallel(workers, &all, &make_worker, &reduce, &mut on_block)
}

#[cfg(feature = "parallel")]
fn parallel<W: Send, A: Send>(
    workers: usize,
    all: &[Range<u64>],
    make_worker: &(impl Fn() -> Result<W> + Sync),
    reduce: &(impl Fn(&mut W, &Range<u64>) -> Result<A> + Sync),
    on_block: &mut impl FnMut(A, u64) -> Result<()>,
) -> Result<()> {
    use rayon::prelude::*;
    use std::sync::Mutex;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| crate::Error::Configuration(format!("cannot start worker pool: {e}")))?;
    // one workspace per pool thread, created on first use
    let slots: Vec<Mutex<Option<W>>> = (0..workers).map(|_| Mutex::new(None)).collect();
    for wave in all.chunks(workers) {
        let results: Vec<Result<A>> = pool.install(|| {
            wave.par_iter()
                .map(|r| {
                    let idx = rayon::current_thread_index().unwrap_or(0) % workers;
                    let mut slot = slots[idx].lock().unwrap_or_else(|p| p.into_inner());
                    if slot.is_none() {
                        *slot = Some(make_worker()?);
                    }
                    reduce(slot.as_mut().expect("initialized"), r)
                })
                .collect()
        });
        for (acc, r) in results.into_iter().zip(wave) {
            on_block(acc?, r.end)?;
        }
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn parallel<W: Send, A: Send>(
    _workers: usize,
    all: &[Range<u64>],
    make_worker: &(impl Fn() -> Result<W> + Sync),
    reduce: &(impl Fn(&mut W, &Range<u64>) -> Result<A> + Sync),
    on_block: &mut impl FnMut(A, u64) -> Result<()>,
) -> Result<()> {
    log::warn!("built without the `parallel` feature; running sequentially");
    let mut w = make_worker()?;
    for r in all {
        let acc = reduce(&mut w, r)?;
        on_block(acc, r.end)?;
    }
    Ok(())
}

/// Fill `out[i] = f(i)` using the global pool when the `parallel` feature
/// is on. Each element is computed independently, so the result does not
/// depend on scheduling.
pub(crate) fn map_indexed<T: Send>(out: &mut [T], f: impl Fn(usize) -> T + Sync + Send) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_are_aligned() {
        assert_eq!(blocks(0..130, 64), vec![0..64, 64..128, 128..130]);
        assert_eq!(blocks(70..130, 64), vec![70..128, 128..130]);
        assert!(blocks(5..5, 64).is_empty());
    }

    fn sum_with(exec: Execution) -> (f64, Vec<u64>) {
        let mut total = 0.0;
        let mut ends = Vec::new();
        run_blocks(
            exec,
            0..1000,
            64,
            || Ok(()),
            || 0.0f64,
            |_, a, i| {
                *a += 1.0 / (i as f64 + 1.0).sqrt();
                Ok(())
            },
            |a, end| {
                total += a;
                ends.push(end);
                Ok(())
            },
        )
        .unwrap();
        (total, ends)
    }

    #[test]
    fn identical_bits_for_any_worker_count() {
        let (a, ea) = sum_with(Execution::Sequential);
        for w in [2, 3, 8] {
            let (b, eb) = sum_with(Execution::Parallel(w));
            assert_eq!(a.to_bits(), b.to_bits());
            assert_eq!(ea, eb);
        }
    }

    #[test]
    fn errors_propagate() {
        let r = run_blocks(
            Execution::Parallel(2),
            0..200,
            64,
            || Ok(()),
            || (),
            |_, _, i| {
                if i == 150 {
                    Err(crate::Error::DegenerateInput("boom".into()))
                } else {
                    Ok(())
                }
            },
            |_, _| Ok(()),
        );
        assert!(r.is_err());
    }
}
