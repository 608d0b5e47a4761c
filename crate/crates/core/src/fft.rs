//! Plan cache and axis-wise transforms over row-major complex arrays.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

type PlanMap = HashMap<(usize, bool), Arc<dyn Fft<f64>>>;

fn planner() -> &'static Mutex<(FftPlanner<f64>, PlanMap)> {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, PlanMap)>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())))
}

pub(crate) fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut guard = planner().lock().expect("fft plan cache poisoned");
    let (planner, map) = &mut *guard;
    map.entry((n, inverse))
        .or_insert_with(|| {
            let dir = if inverse { FftDirection::Inverse } else { FftDirection::Forward };
            planner.plan_fft(n, dir)
        })
        .clone()
}

/// Unnormalized transform of `data` (row-major, `shape`) along `axis`.
///
/// Only lines whose multi-index satisfies `keep(outer, inner)` are transformed,
/// where `outer` indexes the dimensions before `axis` and `inner` those after.
pub(crate) fn fft_axis_masked<K: Fn(usize, usize) -> bool>(
    data: &mut [Complex64],
    shape: &[usize],
    axis: usize,
    inverse: bool,
    keep: K,
    scratch: &mut Vec<Complex64>,
) {
    let n = shape[axis];
    if n == 1 {
        return;
    }
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let fft = plan(n, inverse);
    let mut work = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    if inner == 1 {
        // consecutive kept lines are contiguous and go to the plan as one batch
        let mut o = 0;
        while o < outer {
            if !keep(o, 0) {
                o += 1;
                continue;
            }
            let start = o;
            while o < outer && keep(o, 0) {
                o += 1;
            }
            fft.process_with_scratch(&mut data[start * n..o * n], &mut work);
        }
        return;
    }
    // strided lines are gathered in small blocks so that every row read
    // touches a few adjacent elements
    const BLOCK: usize = 16;
    scratch.resize(n * BLOCK, Complex64::default());
    let mut lines = Vec::with_capacity(inner);
    for o in 0..outer {
        let block = &mut data[o * n * inner..(o + 1) * n * inner];
        lines.clear();
        lines.extend((0..inner).filter(|&i| keep(o, i)));
        for chunk in lines.chunks(BLOCK) {
            let nl = chunk.len();
            for j in 0..n {
                let row = &block[j * inner..(j + 1) * inner];
                for (li, &i) in chunk.iter().enumerate() {
                    scratch[li * n + j] = row[i];
                }
            }
            fft.process_with_scratch(&mut scratch[..nl * n], &mut work);
            for j in 0..n {
                let row = &mut block[j * inner..(j + 1) * inner];
                for (li, &i) in chunk.iter().enumerate() {
                    row[i] = scratch[li * n + j];
                }
            }
        }
    }
}

/// Unnormalized transform along every axis listed in `axes`.
pub(crate) fn fft_axes(data: &mut [Complex64], shape: &[usize], axes: &[usize], inverse: bool) {
    let mut scratch = Vec::new();
    for &ax in axes {
        fft_axis_masked(data, shape, ax, inverse, |_, _| true, &mut scratch);
    }
}

/// Signed wavenumber index of FFT bin `j` for length `n`; Nyquist maps to `−n/2`.
#[inline]
pub(crate) fn signed_index(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Cubic-grid helper for per-x-point velocity transforms of size `n³`.
pub(crate) struct Cube {
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Cube {
    pub fn new(n: usize) -> Self {
        Self { n, fwd: plan(n, false), inv: plan(n, true) }
    }

    /// Unnormalized 3-D transform in place.
    pub fn transform(&self, data: &mut [Complex64], inverse: bool, scratch: &mut Vec<Complex64>) {
        let n = self.n;
        let fft = if inverse { &self.inv } else { &self.fwd };
        let mut work = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        // last axis: contiguous lines
        fft.process_with_scratch(data, &mut work);
        // middle and first axes through a transposed scratch block
        scratch.resize(n * n * n, Complex64::default());
        for plane in 0..n {
            let block = &mut data[plane * n * n..(plane + 1) * n * n];
            let s = &mut scratch[..n * n];
            for j in 0..n {
                for k in 0..n {
                    s[k * n + j] = block[j * n + k];
                }
            }
            fft.process_with_scratch(s, &mut work);
            for j in 0..n {
                for k in 0..n {
                    block[j * n + k] = s[k * n + j];
                }
            }
        }
        let nn = n * n;
        for c in 0..nn / n {
            let s = &mut scratch[..n * n];
            for i in 0..n {
                for k in 0..n {
                    s[k * n + i] = data[i * nn + c * n + k];
                }
            }
            fft.process_with_scratch(s, &mut work);
            for i in 0..n {
                for k in 0..n {
                    data[i * nn + c * n + k] = s[k * n + i];
                }
            }
        }
    }
}
