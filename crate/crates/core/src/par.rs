//! Deterministic fan-out over index ranges.
//!
//! Work is split into fixed-size chunks whose boundaries never depend on the
//! thread count, and partial results are combined in chunk order. The result
//! is therefore bit-identical for any number of threads.

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Items per chunk. Fixed so reductions do not depend on the thread count.
pub const CHUNK: usize = 8192;

static THREADS: AtomicUsize = AtomicUsize::new(0);

/// Environment variable read once for the worker count.
pub const THREADS_ENV: &str = "NEGREFRACT_THREADS";

/// Override the number of worker threads. Zero restores the default.
pub fn set_threads(n: usize) {
    THREADS.store(n, Ordering::Relaxed);
}

pub fn threads() -> usize {
    let n = THREADS.load(Ordering::Relaxed);
    if n > 0 {
        return n;
    }
    let n = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1);
    THREADS.store(n, Ordering::Relaxed);
    n
}

fn chunks(len: usize) -> Vec<Range<usize>> {
    (0..len.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(len))
        .collect()
}

/// Map every chunk of `0..len` and return the per-chunk results in order.
pub fn map_chunks<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync,
{
    let ranges = chunks(len);
    let nt = threads().min(ranges.len()).max(1);
    if nt == 1 {
        return ranges.into_iter().map(&f).collect();
    }
    let mut out: Vec<Option<T>> = (0..ranges.len()).map(|_| None).collect();
    let per = ranges.len().div_ceil(nt);
    std::thread::scope(|s| {
        for (slots, rs) in out.chunks_mut(per).zip(ranges.chunks(per)) {
            let f = &f;
            s.spawn(move || {
                for (slot, r) in slots.iter_mut().zip(rs) {
                    *slot = Some(f(r.clone()));
                }
            });
        }
    });
    out.into_iter().map(|o| o.expect("chunk result")).collect()
}

/// Sum of `f` over chunks, combined left to right.
pub fn sum_chunks<F>(len: usize, f: F) -> f64
where
    F: Fn(Range<usize>) -> f64 + Sync,
{
    map_chunks(len, f).into_iter().fold(0.0, |a, b| a + b)
}

/// Fill `out[i]` for every index, chunk by chunk.
pub fn fill<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let nt = threads();
    if nt == 1 || out.len() <= CHUNK {
        for (i, o) in out.iter_mut().enumerate() {
            *o = f(i);
        }
        return;
    }
    let per = out.len().div_ceil(nt);
    std::thread::scope(|s| {
        for (c, part) in out.chunks_mut(per).enumerate() {
            let f = &f;
            s.spawn(move || {
                for (k, o) in part.iter_mut().enumerate() {
                    *o = f(c * per + k);
                }
            });
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_are_thread_independent() {
        let f = |r: Range<usize>| r.map(|i| 1.0 / (1.0 + i as f64)).sum::<f64>();
        set_threads(1);
        let a = sum_chunks(100_003, f);
        set_threads(3);
        let b = sum_chunks(100_003, f);
        set_threads(0);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn fill_covers_every_index() {
        let mut v = vec![0usize; 3 * CHUNK + 5];
        fill(&mut v, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }
}
