//! Execution mode switch for the data-parallel loops.
//!
//! Every parallel loop in the crate is an order-preserving map over
//! independent items, so `Exec::Parallel` and `Exec::Sequential` produce
//! bit-identical results. Without the `parallel` feature both modes run
//! sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Maps `f` over `items` mutably, collecting results in order.
pub fn map_mut<I, R, F>(exec: Exec, items: &mut [I], f: F) -> Vec<R>
where
    I: Send,
    R: Send,
    F: Fn(usize, &mut I) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items
            .par_iter_mut()
            .enumerate()
            .map(|(i, it)| f(i, it))
            .collect();
    }
    let _ = exec;
    items.iter_mut().enumerate().map(|(i, it)| f(i, it)).collect()
}

/// Maps `f` over the index range `0..n`, collecting results in order.
pub fn map_range<R, F>(exec: Exec, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Runs `f` over disjoint row chunks of `out` (each `row_len` wide).
pub fn for_row_chunks<T, F>(exec: Exec, out: &mut [T], row_len: usize, rows_per_chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    let chunk = (rows_per_chunk.max(1)) * row_len.max(1);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        out.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i * rows_per_chunk.max(1), c));
        return;
    }
    let _ = exec;
    for (i, c) in out.chunks_mut(chunk).enumerate() {
        f(i * rows_per_chunk.max(1), c);
    }
}

use std::sync::atomic::{AtomicU8, Ordering};

static GEMM_MODE: AtomicU8 = AtomicU8::new(1);

/// Sets the process-wide mode used by matrix products inside the layers.
pub fn set_gemm_exec(exec: Exec) {
    GEMM_MODE.store(exec as u8, Ordering::Relaxed);
}

pub fn gemm_exec() -> Exec {
    match GEMM_MODE.load(Ordering::Relaxed) {
        0 => Exec::Sequential,
        _ => Exec::Parallel,
    }
}
