//! Deterministic parallel reductions.
//!
//! Work is split into fixed-size chunks independent of the thread count;
//! chunk partial sums are compensated and combined in index order, so the
//! result is bitwise reproducible for any pool size.

use rayon::prelude::*;

use crate::quadrature::{ComplexSum, NeumaierSum, SpinorSum};
use crate::spinor::Spinor4;
use num_complex::Complex64;

pub const CHUNK: usize = 4096;

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n)))
        .collect()
}

pub fn sum_indexed<F: Fn(usize) -> f64 + Sync>(n: usize, f: F) -> f64 {
    let partial: Vec<f64> = chunk_ranges(n)
        .into_par_iter()
        .map(|(a, b)| {
            let mut s = NeumaierSum::default();
            for i in a..b {
                s.add(f(i));
            }
            s.value()
        })
        .collect();
    let mut s = NeumaierSum::default();
    for p in partial {
        s.add(p);
    }
    s.value()
}

pub fn sum_indexed_complex<F: Fn(usize) -> Complex64 + Sync>(n: usize, f: F) -> Complex64 {
    let partial: Vec<Complex64> = chunk_ranges(n)
        .into_par_iter()
        .map(|(a, b)| {
            let mut s = ComplexSum::default();
            for i in a..b {
                s.add(f(i));
            }
            s.value()
        })
        .collect();
    let mut s = ComplexSum::default();
    for p in partial {
        s.add(p);
    }
    s.value()
}

pub fn sum_indexed_spinor<F: Fn(usize) -> Spinor4 + Sync>(n: usize, f: F) -> Spinor4 {
    let partial: Vec<Spinor4> = chunk_ranges(n)
        .into_par_iter()
        .map(|(a, b)| {
            let mut s = SpinorSum::default();
            for i in a..b {
                s.add(&f(i));
            }
            s.value()
        })
        .collect();
    let mut s = SpinorSum::default();
    for p in &partial {
        s.add(p);
    }
    s.value()
}

/// Vector-valued reduction: `f` accumulates index `i` into a buffer of
/// length `len`; chunk buffers are added in order.
pub fn sum_indexed_vec<F>(n: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let partial: Vec<Vec<f64>> = chunk_ranges(n)
        .into_par_iter()
        .map(|(a, b)| {
            let mut buf = vec![0.0; len];
            for i in a..b {
                f(i, &mut buf);
            }
            buf
        })
        .collect();
    let mut acc = vec![NeumaierSum::default(); len];
    for p in partial {
        for (a, v) in acc.iter_mut().zip(p) {
            a.add(v);
        }
    }
    acc.into_iter().map(|a| a.value()).collect()
}
