//! Landau–Coulomb coefficient fields and the right-hand sides of the toy
//! model and the viscous Landau equation.
//!
//! All Coulomb convolutions derive from a single biharmonic potential
//! `B(z) = |z|/(8π)`, truncated at `|z| = L = 2√3·l_v`, the largest distance
//! between two points of the velocity box. Then
//!
//! * `a = ΔB ∗ f` with `ΔB = 1/(4π|z|)`,
//! * `A_ij = ∂_i∂_j B ∗ f` with `∂_i∂_j B = P(z)/(8π|z|)`.
//!
//! The Fourier transform of the truncated potential is known in closed form,
//! so the kernels are exact on the box up to round-off, and `tr A = a`,
//! `div A = ∇a` hold spectrally. The kernel spectra are computed once on a
//! grid three times the box, restricted to box offsets and transformed on the
//! `2n_v` zero-padded grid that each convolution uses.

use crate::error::{Error, Result};
use crate::fft::{self, fft_axis_masked};
use crate::spectral::{self, japanese, pack, Field, PhaseGrid, VelocityOps};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};

/// Parameters shared by both collision models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Viscosity `ν ≥ 0`.
    pub nu: f64,
    /// Toy-model weight exponent `β ≤ 2`.
    pub beta: f64,
    /// Polynomial weight `m > 3`.
    pub m: f64,
    /// Decay exponent `k₀`.
    pub k0: f64,
    /// Density lower bound / smallness constant.
    pub c0: f64,
    /// Initial sup bound.
    pub m0: f64,
}

impl ModelParams {
    pub fn new(nu: f64, beta: f64, m: f64, k0: f64, c0: f64, m0: f64) -> Result<Self> {
        let p = Self { nu, beta, m, k0, c0, m0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu >= 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("nu must be ≥ 0, got {}", self.nu)));
        }
        if !(self.beta <= 2.0) {
            return Err(Error::InvalidParameter(format!("beta must be ≤ 2, got {}", self.beta)));
        }
        if !(self.m > 3.0) {
            return Err(Error::InvalidParameter(format!("m must be > 3, got {}", self.m)));
        }
        if !(self.k0.is_finite() && self.c0 > 0.0 && self.m0 > 0.0) {
            return Err(Error::InvalidParameter("k0 finite, c0 > 0 and m0 > 0 required".into()));
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { nu: 0.05, beta: 0.0, m: 4.0, k0: 10.0, c0: 0.01, m0: 1.0 }
    }
}

/// Component order of the symmetric matrix field: xx, xy, xz, yy, yz, zz.
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Index into [`SYM_PAIRS`] of the entry `(i, j)`.
pub fn sym_index(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    match (a, b) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

/// Fourier transform of `|z|/(8π)·1{|z| < L}` at `|k| = k`.
fn potential_hat(k: f64, l: f64) -> f64 {
    let kl = k * l;
    if kl < 1.0 {
        // (1/2) Σ_j (−1)^j (kL)^{2j} L⁴ / ((2j+1)! (2j+4)); the closed form cancels badly here
        let mut term = 1.0;
        let mut sum = 0.25;
        for j in 1..20 {
            term *= -kl * kl / ((2 * j) as f64 * (2 * j + 1) as f64);
            sum += term / (2 * j + 4) as f64;
        }
        return 0.5 * l.powi(4) * sum;
    }
    let (s, c) = kl.sin_cos();
    (-l * l * c / k + 2.0 * l * s / (k * k) + 2.0 * (c - 1.0) / (k * k * k)) / (2.0 * k)
}

/// Precomputed kernel spectra on the `2n_v` padded grid.
pub struct LandauKernels {
    n: usize,
    h: f64,
    /// Spectrum of the `a` kernel.
    pot: Vec<f64>,
    /// Spectra of the six independent `A` kernels.
    mat: [Vec<f64>; 6],
    /// Wavenumbers of the padded grid, Nyquist set to zero.
    k: Vec<f64>,
}

impl LandauKernels {
    pub fn new(n_v: usize, l_v: f64) -> Result<Self> {
        if !n_v.is_power_of_two() || n_v < 2 || !(l_v > 0.0) {
            return Err(Error::InvalidParameter(format!("bad Landau grid n_v={n_v}, l_v={l_v}")));
        }
        let n = n_v;
        let h = 2.0 * l_v / n as f64;
        let big_l = 2.0 * 3f64.sqrt() * l_v;
        let m = 3 * n;
        let k_big: Vec<f64> = (0..m)
            .map(|j| 2.0 * PI * fft::signed_index(j, m) as f64 / (m as f64 * h))
            .collect();
        let mut bhat = vec![0.0; m * m * m];
        for i0 in 0..m {
            for i1 in 0..m {
                for i2 in 0..m {
                    let kk = (k_big[i0].powi(2) + k_big[i1].powi(2) + k_big[i2].powi(2)).sqrt();
                    bhat[(i0 * m + i1) * m + i2] = potential_hat(kk, big_l);
                }
            }
        }
        let keep_big = |i: usize| i < n || i >= 2 * n;
        let p = 2 * n;
        let restrict = |mult: &dyn Fn(usize, usize, usize) -> f64| -> Vec<f64> {
            let mut buf: Vec<Complex64> = Vec::with_capacity(m * m * m);
            for i0 in 0..m {
                for i1 in 0..m {
                    for i2 in 0..m {
                        let idx = (i0 * m + i1) * m + i2;
                        buf.push(Complex64::new(mult(i0, i1, i2) * bhat[idx], 0.0));
                    }
                }
            }
            let shape = [m, m, m];
            let mut scratch = Vec::new();
            fft_axis_masked(&mut buf, &shape, 0, true, |_, _| true, &mut scratch);
            fft_axis_masked(&mut buf, &shape, 1, true, |o, _| keep_big(o), &mut scratch);
            fft_axis_masked(
                &mut buf,
                &shape,
                2,
                true,
                |o, _| keep_big(o / m) && keep_big(o % m),
                &mut scratch,
            );
            // real-space kernel samples per unit volume
            let s = 1.0 / ((m * m * m) as f64 * h * h * h);
            let mut small = vec![Complex64::default(); p * p * p];
            let map = |d: i64| -> (usize, usize) {
                (d.rem_euclid(m as i64) as usize, d.rem_euclid(p as i64) as usize)
            };
            for d0 in -(n as i64)..n as i64 {
                let (b0, s0) = map(d0);
                for d1 in -(n as i64)..n as i64 {
                    let (b1, s1) = map(d1);
                    for d2 in -(n as i64)..n as i64 {
                        let (b2, s2) = map(d2);
                        small[(s0 * p + s1) * p + s2] =
                            Complex64::new(buf[(b0 * m + b1) * m + b2].re * s, 0.0);
                    }
                }
            }
            fft::fft_axes(&mut small, &[p, p, p], &[0, 1, 2], false);
            small.iter().map(|c| c.re).collect()
        };
        let kb = &k_big;
        let pot = restrict(&|i0, i1, i2| -(kb[i0].powi(2) + kb[i1].powi(2) + kb[i2].powi(2)));
        let mat = SYM_PAIRS.map(|(a, b)| {
            restrict(&|i0, i1, i2| {
                let kv = [kb[i0], kb[i1], kb[i2]];
                -kv[a] * kv[b]
            })
        });
        let k = (0..p)
            .map(|j| {
                if j == n {
                    0.0
                } else {
                    2.0 * PI * fft::signed_index(j, p) as f64 / (p as f64 * h)
                }
            })
            .collect();
        Ok(Self { n, h, pot, mat, k })
    }

    pub fn n_v(&self) -> usize {
        self.n
    }
}

/// A convolution output requested from [`LandauKernels::convolve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Output {
    Potential,
    Matrix(usize),
    GradPotential(usize),
    DivMatrix(usize),
    /// Gradient of `f` itself taken on the padded grid.
    GradDensity(usize),
}

impl LandauKernels {
    /// Writes `w·src` (or `i·w·src` when `imag`) into `dst` and runs the
    /// inverse transform along the last axis, one plane at a time.
    fn weight_and_invert_last<W: Fn(usize, [f64; 3]) -> f64>(
        &self,
        src: &[Complex64],
        dst: &mut [Complex64],
        imag: bool,
        w: W,
    ) {
        let p = 2 * self.n;
        let pp = p * p;
        let kk = &self.k[..p];
        let fft = fft::plan(p, true);
        let mut work = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        for (i0, plane) in dst.chunks_mut(pp).enumerate() {
            let k0 = kk[i0];
            let mut idx = i0 * pp;
            for (i1, &k1) in kk.iter().enumerate() {
                let row = &mut plane[i1 * p..(i1 + 1) * p];
                for (d, &k2) in row.iter_mut().zip(kk) {
                    let r = w(idx, [k0, k1, k2]);
                    let z = src[idx];
                    *d = if imag { Complex64::new(-z.im * r, z.re * r) } else { z * r };
                    idx += 1;
                }
            }
            fft.process_with_scratch(plane, &mut work);
        }
    }
}

impl LandauKernels {
    /// Applies the requested kernels to `f1 + i f2` (one velocity cube each).
    /// Real parts of the outputs belong to `f1`, imaginary parts to `f2`.
    pub fn convolve(&self, f1: &[f64], f2: Option<&[f64]>, outputs: &[Output]) -> Vec<Vec<Complex64>> {
        let n = self.n;
        let p = 2 * n;
        let shape = [p, p, p];
        let h3 = self.h.powi(3);
        let mut spec = vec![Complex64::default(); p * p * p];
        for i0 in 0..n {
            for i1 in 0..n {
                for i2 in 0..n {
                    let src = (i0 * n + i1) * n + i2;
                    let im = f2.map(|g| g[src]).unwrap_or(0.0);
                    spec[(i0 * p + i1) * p + i2] = Complex64::new(f1[src] * h3, im * h3);
                }
            }
        }
        let mut scratch = Vec::new();
        // the full-size pass runs along the contiguous axis
        fft_axis_masked(&mut spec, &shape, 0, false, |_, i| i / p < n && i % p < n, &mut scratch);
        fft_axis_masked(&mut spec, &shape, 1, false, |_, i| i < n, &mut scratch);
        fft_axis_masked(&mut spec, &shape, 2, false, |_, _| true, &mut scratch);

        let norm = 1.0 / (p * p * p) as f64;
        let mut out = Vec::with_capacity(outputs.len());
        let mut buf = vec![Complex64::default(); p * p * p];
        for req in outputs {
            match *req {
                Output::Potential => {
                    self.weight_and_invert_last(&spec, &mut buf, false, |idx, _| self.pot[idx] * norm)
                }
                Output::Matrix(c) => {
                    self.weight_and_invert_last(&spec, &mut buf, false, |idx, _| self.mat[c][idx] * norm)
                }
                Output::GradPotential(d) => self
                    .weight_and_invert_last(&spec, &mut buf, true, |idx, kv| kv[d] * self.pot[idx] * norm),
                Output::GradDensity(d) => {
                    self.weight_and_invert_last(&spec, &mut buf, true, |_, kv| kv[d] * norm / h3)
                }
                Output::DivMatrix(i) => self.weight_and_invert_last(&spec, &mut buf, true, |idx, kv| {
                    let m = &self.mat;
                    let acc = kv[0] * m[sym_index(i, 0)][idx]
                        + kv[1] * m[sym_index(i, 1)][idx]
                        + kv[2] * m[sym_index(i, 2)][idx];
                    acc * norm
                }),
            }
            fft_axis_masked(&mut buf, &shape, 1, true, |_, i| i < n, &mut scratch);
            fft_axis_masked(&mut buf, &shape, 0, true, |_, i| i / p < n && i % p < n, &mut scratch);
            let mut box_out = Vec::with_capacity(n * n * n);
            for i0 in 0..n {
                for i1 in 0..n {
                    let row = (i0 * p + i1) * p;
                    box_out.extend_from_slice(&buf[row..row + n]);
                }
            }
            out.push(box_out);
        }
        out
    }
}

/// Landau coefficient fields on a phase grid, in the layout of [`Field::values`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub grid: PhaseGrid,
    pub a: Vec<f64>,
    /// Components in [`SYM_PAIRS`] order.
    pub a_mat: [Vec<f64>; 6],
    pub grad_a: [Vec<f64>; 3],
}

impl CoefficientSet {
    pub fn matrix_at(&self, idx: usize) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = self.a_mat[sym_index(i, j)][idx];
            }
        }
        m
    }
}

/// Eigenvalues of a symmetric 3×3 matrix in ascending order.
pub fn symmetric_eigenvalues(m: &[[f64; 3]; 3]) -> [f64; 3] {
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut e = [m[0][0], m[1][1], m[2][2]];
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        return e;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (m[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let e2 = 3.0 * q - e1 - e3;
    [e3, e2, e1]
}


/// Coefficient computation and collision right-hand sides on a fixed grid.
pub struct LandauOperator {
    grid: PhaseGrid,
    kernels: Option<LandauKernels>,
    ops: VelocityOps,
    /// Set once the shell warning has been logged; later occurrences go to debug.
    shell_warned: AtomicBool,
}

impl LandauOperator {
    /// Operator with Coulomb kernels; construction cost grows like `(3n_v)³ log n_v`.
    pub fn new(grid: PhaseGrid) -> Result<Self> {
        Ok(Self {
            grid,
            kernels: Some(LandauKernels::new(grid.n_v, grid.l_v)?),
            ops: VelocityOps::for_grid(&grid),
            shell_warned: AtomicBool::new(false),
        })
    }

    /// Operator for the toy model only; skips the kernel precomputation.
    pub fn toy_only(grid: PhaseGrid) -> Self {
        Self { grid, kernels: None, ops: VelocityOps::for_grid(&grid), shell_warned: AtomicBool::new(false) }
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn velocity_ops(&self) -> &VelocityOps {
        &self.ops
    }

    fn kernels(&self) -> Result<&LandauKernels> {
        self.kernels
            .as_ref()
            .ok_or_else(|| Error::Precondition("operator built without Coulomb kernels".into()))
    }

    fn check(&self, f: &Field) -> Result<()> {
        if f.grid != self.grid {
            return Err(Error::ShapeMismatch { expected: self.grid.len(), got: f.grid.len() });
        }
        Ok(())
    }

    fn warn_shell(&self, f: &Field) {
        let nv = self.grid.n_vpts();
        let mut shell = 0.0;
        let mut total = 0.0;
        for (i, v) in f.values.iter().enumerate() {
            total += v.abs();
            if self.grid.is_shell(i % nv) {
                shell += v.abs();
            }
        }
        if total > 0.0 && shell > 1e-6 * total {
            let level = if self.shell_warned.swap(true, Ordering::Relaxed) {
                log::Level::Debug
            } else {
                log::Level::Warn
            };
            log::log!(
                level,
                "velocity-box shell carries {:.2e} of the mass; truncated convolutions may be inaccurate",
                shell / total
            );
        }
    }

    /// Runs the requested convolutions on every x-point, two at a time.
    fn convolve_field(&self, f: &Field, outputs: &[Output]) -> Result<Vec<Vec<f64>>> {
        self.check(f)?;
        self.warn_shell(f);
        let k = self.kernels()?;
        let nv = self.grid.n_vpts();
        let pairs: Vec<Vec<Vec<Complex64>>> = f
            .values
            .par_chunks(2 * nv)
            .map(|c| {
                let (f1, f2) = c.split_at(nv);
                k.convolve(f1, (!f2.is_empty()).then_some(f2), outputs)
            })
            .collect();
        let mut res = vec![vec![0.0; self.grid.len()]; outputs.len()];
        for (pi, outs) in pairs.iter().enumerate() {
            for (r, o) in res.iter_mut().zip(outs) {
                let base = 2 * pi * nv;
                for (i, z) in o.iter().enumerate() {
                    r[base + i] = z.re;
                    if base + nv + i < r.len() {
                        r[base + nv + i] = z.im;
                    }
                }
            }
        }
        Ok(res)
    }

    /// Newtonian potential `a[f]`.
    pub fn compute_a(&self, f: &Field) -> Result<Vec<f64>> {
        Ok(self.convolve_field(f, &[Output::Potential])?.remove(0))
    }

    /// Matrix field `A[f]` in [`SYM_PAIRS`] order.
    #[allow(non_snake_case)]
    pub fn compute_A(&self, f: &Field) -> Result<[Vec<f64>; 6]> {
        let outs: Vec<Output> = (0..6).map(Output::Matrix).collect();
        let v = self.convolve_field(f, &outs)?;
        Ok(std::array::from_fn(|i| v[i].clone()))
    }

    /// `∇a[f]` as the spectral gradient of the padded potential.
    pub fn compute_grad_a(&self, f: &Field) -> Result<[Vec<f64>; 3]> {
        let outs: Vec<Output> = (0..3).map(Output::GradPotential).collect();
        let v = self.convolve_field(f, &outs)?;
        Ok(std::array::from_fn(|i| v[i].clone()))
    }

    /// `div A[f]` as the spectral divergence of the padded matrix field.
    #[allow(non_snake_case)]
    pub fn compute_div_A(&self, f: &Field) -> Result<[Vec<f64>; 3]> {
        let outs: Vec<Output> = (0..3).map(Output::DivMatrix).collect();
        let v = self.convolve_field(f, &outs)?;
        Ok(std::array::from_fn(|i| v[i].clone()))
    }

    pub fn compute_coefficients(&self, f: &Field) -> Result<CoefficientSet> {
        let mut outs = vec![Output::Potential];
        outs.extend((0..6).map(Output::Matrix));
        outs.extend((0..3).map(Output::GradPotential));
        let mut v = self.convolve_field(f, &outs)?.into_iter();
        let a = v.next().unwrap();
        let a_mat = std::array::from_fn(|_| v.next().unwrap());
        let grad_a = std::array::from_fn(|_| v.next().unwrap());
        Ok(CoefficientSet { grid: self.grid, a, a_mat, grad_a })
    }

    /// Toy-model collision term `∇_v·(ρ(x)⟨v⟩^β ∇_v f)` with a given density.
    pub fn toy_rhs_with_density(&self, f: &Field, rho: &[f64], beta: f64) -> Result<Field> {
        self.check(f)?;
        if rho.len() != self.grid.n_xpts() {
            return Err(Error::ShapeMismatch { expected: self.grid.n_xpts(), got: rho.len() });
        }
        let grid = self.grid;
        let nv = grid.n_vpts();
        let weight: Vec<f64> = (0..nv).map(|iv| japanese(&grid.v_coord(iv)).powf(beta)).collect();
        let ops = &self.ops;
        let mut out = vec![0.0; grid.len()];
        out.par_chunks_mut(2 * nv)
            .zip(f.values.par_chunks(2 * nv))
            .enumerate()
            .for_each(|(pi, (dst, src))| {
                let (f1, f2) = src.split_at(nv);
                let r1 = rho[2 * pi];
                let r2 = if f2.is_empty() { 0.0 } else { rho[2 * pi + 1] };
                let mut scratch = Vec::new();
                let mut buf = pack(f1, (!f2.is_empty()).then_some(f2));
                ops.forward(&mut buf, &mut scratch);
                let grad = ops.gradient_from_spectrum(&buf, &mut scratch);
                let flux = grad.map(|g| {
                    g.iter()
                        .zip(&weight)
                        .map(|(z, w)| Complex64::new(z.re * r1 * w, z.im * r2 * w))
                        .collect::<Vec<_>>()
                });
                let div = ops.divergence_packed(flux, &mut scratch);
                for (i, z) in div.iter().enumerate() {
                    dst[i] = z.re;
                    if nv + i < dst.len() {
                        dst[nv + i] = z.im;
                    }
                }
            });
        Field::from_values(grid, out, f.time)
    }

    /// Toy-model collision term with `ρ = ∫ f dv`.
    pub fn toy_rhs(&self, f: &Field, params: &ModelParams) -> Result<Field> {
        let rho = spectral::density(f);
        self.toy_rhs_with_density(f, &rho, params.beta)
    }

    /// `∇_v·(A[f]∇_v f − f∇_v a[f]) + νΔ_v f`.
    pub fn landau_rhs(&self, f: &Field, params: &ModelParams) -> Result<Field> {
        self.check(f)?;
        self.warn_shell(f);
        let k = self.kernels()?;
        let grid = self.grid;
        let nv = grid.n_vpts();
        let ops = &self.ops;
        let nu = params.nu;
        let mut outs: Vec<Output> = (0..6).map(Output::Matrix).collect();
        outs.extend((0..3).map(Output::GradPotential));
        let mut out = vec![0.0; grid.len()];
        out.par_chunks_mut(2 * nv)
            .zip(f.values.par_chunks(2 * nv))
            .for_each(|(dst, src)| {
                let (f1, f2) = src.split_at(nv);
                let f2o = (!f2.is_empty()).then_some(f2);
                let coef = k.convolve(f1, f2o, &outs);
                let mut scratch = Vec::new();
                let mut fs = pack(f1, f2o);
                ops.forward(&mut fs, &mut scratch);
                let grad = ops.gradient_from_spectrum(&fs, &mut scratch);
                let flux: [Vec<Complex64>; 3] = std::array::from_fn(|i| {
                    (0..nv)
                        .map(|p| {
                            let mut re = -f1[p] * coef[6 + i][p].re + nu * grad[i][p].re;
                            let mut im = if f2.is_empty() {
                                0.0
                            } else {
                                -f2[p] * coef[6 + i][p].im + nu * grad[i][p].im
                            };
                            for (j, g) in grad.iter().enumerate() {
                                let a = coef[sym_index(i, j)][p];
                                re += a.re * g[p].re;
                                im += a.im * g[p].im;
                            }
                            Complex64::new(re, im)
                        })
                        .collect()
                });
                let div = ops.divergence_packed(flux, &mut scratch);
                for (i, z) in div.iter().enumerate() {
                    dst[i] = z.re;
                    if nv + i < dst.len() {
                        dst[nv + i] = z.im;
                    }
                }
            });
        Field::from_values(grid, out, f.time)
    }

    /// Upper bounds of `sup a[f]` and `sup |∇a[f]|` from `‖f‖_∞` and `‖f‖_1`
    /// per x-point, split at the optimal radius. Valid for any `f`.
    pub fn coefficient_bounds(&self, f: &Field) -> (f64, f64) {
        let cv = self.grid.cell_v();
        let mut a_max: f64 = 0.0;
        let mut g_max: f64 = 0.0;
        for ix in 0..self.grid.n_xpts() {
            let s = f.x_slice(ix);
            let inf = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let one: f64 = s.iter().map(|v| v.abs()).sum::<f64>() * cv;
            if inf == 0.0 || one == 0.0 {
                continue;
            }
            // ∫f/|z| ≤ 2πR²‖f‖∞ + ‖f‖₁/R, minimized at R³ = ‖f‖₁/(4π‖f‖∞)
            let r = (one / (4.0 * PI * inf)).cbrt();
            a_max = a_max.max((2.0 * PI * r * r * inf + one / r) / (4.0 * PI));
            // ∫f/|z|² ≤ 4πR‖f‖∞ + ‖f‖₁/R², minimized at R³ = ‖f‖₁/(2π‖f‖∞)
            let r = (one / (2.0 * PI * inf)).cbrt();
            g_max = g_max.max((4.0 * PI * r * inf + one / (r * r)) / (4.0 * PI));
        }
        (a_max, g_max)
    }
}

/// Weighted field `g = ⟨v⟩^m f`.
pub fn weighted_field(f: &Field, m: f64) -> Field {
    let grid = f.grid;
    let nv = grid.n_vpts();
    let w: Vec<f64> = (0..nv).map(|iv| japanese(&grid.v_coord(iv)).powf(m)).collect();
    let values = f.values.iter().enumerate().map(|(i, v)| v * w[i % nv]).collect();
    Field { grid, values, time: f.time }
}

/// Relative L² residual of `−Δ_v a = f` over the interior half box
/// `max_i |v_i| ≤ l_v/2`, summed over x-points.
///
/// The potential is not periodic on the box, so a spectral Laplacian would
/// pick up the jump at the box faces. A sixth-order central stencil is used
/// instead; it only touches points three cells away from the evaluation point.
pub fn interior_poisson_residual(f: &Field, a: &[f64]) -> Result<f64> {
    let grid = f.grid;
    if a.len() != grid.len() {
        return Err(Error::ShapeMismatch { expected: grid.len(), got: a.len() });
    }
    const C: [f64; 4] = [-49.0 / 18.0, 1.5, -3.0 / 20.0, 1.0 / 90.0];
    let n = grid.n_v;
    let nv = grid.n_vpts();
    if n < 8 {
        return Err(Error::InvalidParameter("interior residual needs n_v ≥ 8".into()));
    }
    let inv = 1.0 / (grid.dv() * grid.dv());
    let half = 0.5 * grid.l_v + 1e-12;
    let axis = grid.v_axis();
    let inner: Vec<usize> = (3..n - 3).filter(|&i| axis[i].abs() <= half).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for ix in 0..grid.n_xpts() {
        let av = &a[ix * nv..(ix + 1) * nv];
        let fv = f.x_slice(ix);
        let at = |i: usize, j: usize, k: usize| av[(i * n + j) * n + k];
        for &i in &inner {
            for &j in &inner {
                for &k in &inner {
                    let mut lap = 3.0 * C[0] * at(i, j, k);
                    for (o, c) in C.iter().enumerate().skip(1) {
                        lap += c
                            * (at(i + o, j, k) + at(i - o, j, k) + at(i, j + o, k) + at(i, j - o, k) + at(i, j, k + o)
                                + at(i, j, k - o));
                    }
                    let fq = fv[(i * n + j) * n + k];
                    num += (-lap * inv - fq).powi(2);
                    den += fq * fq;
                }
            }
        }
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}

fn slice_norm(s: &[f64], p: f64, cv: f64) -> f64 {
    if p.is_infinite() {
        s.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    } else {
        (s.iter().map(|v| v.abs().powf(p)).sum::<f64>() * cv).powf(1.0 / p)
    }
}

/// Measured constants of the coefficient inequalities, maximized over x-points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    /// `‖A‖_∞ / ‖a‖_∞` (spectral norm of A); at most 1 for `f ≥ 0`.
    pub a_matrix_over_a: f64,
    /// `‖a‖_∞ / ‖⟨v⟩^{m_a} f‖_2`.
    pub a_sup_constant: f64,
    /// `‖∇a‖_∞ / ‖⟨v⟩^{m_g} f‖_4`.
    pub grad_sup_constant: f64,
    /// `‖∇a‖_6 / ‖f‖_2`.
    pub l6_ratio: f64,
    /// Smallest eigenvalue of `A` over the grid.
    pub min_eigenvalue: f64,
}

/// Evaluates the coefficient inequalities for `f` with weights `m_a` and `m_g`.
pub fn measure_inequalities(
    coef: &CoefficientSet,
    f: &Field,
    m_a: f64,
    m_g: f64,
) -> InequalityReport {
    let grid = coef.grid;
    let nv = grid.n_vpts();
    let cv = grid.cell_v();
    let ga = weighted_field(f, m_a);
    let gg = weighted_field(f, m_g);
    let mut rep = InequalityReport {
        a_matrix_over_a: 0.0,
        a_sup_constant: 0.0,
        grad_sup_constant: 0.0,
        l6_ratio: 0.0,
        min_eigenvalue: f64::INFINITY,
    };
    for ix in 0..grid.n_xpts() {
        let r = ix * nv..(ix + 1) * nv;
        let a_sup = slice_norm(&coef.a[r.clone()], f64::INFINITY, cv);
        let gmag: Vec<f64> = r
            .clone()
            .map(|i| (coef.grad_a[0][i].powi(2) + coef.grad_a[1][i].powi(2) + coef.grad_a[2][i].powi(2)).sqrt())
            .collect();
        let mut amat_sup: f64 = 0.0;
        for i in r.clone() {
            let e = symmetric_eigenvalues(&coef.matrix_at(i));
            amat_sup = amat_sup.max(e[0].abs().max(e[2].abs()));
            rep.min_eigenvalue = rep.min_eigenvalue.min(e[0]);
        }
        let f2 = slice_norm(f.x_slice(ix), 2.0, cv);
        let ga2 = slice_norm(ga.x_slice(ix), 2.0, cv);
        let gg4 = slice_norm(gg.x_slice(ix), 4.0, cv);
        if a_sup > 0.0 {
            rep.a_matrix_over_a = rep.a_matrix_over_a.max(amat_sup / a_sup);
        }
        if ga2 > 0.0 {
            rep.a_sup_constant = rep.a_sup_constant.max(a_sup / ga2);
        }
        if gg4 > 0.0 {
            rep.grad_sup_constant = rep.grad_sup_constant.max(slice_norm(&gmag, f64::INFINITY, cv) / gg4);
        }
        if f2 > 0.0 {
            rep.l6_ratio = rep.l6_ratio.max(slice_norm(&gmag, 6.0, cv) / f2);
        }
    }
    rep
}
