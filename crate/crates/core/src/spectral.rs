//! Phase-space grids on `T^d × [−l_v, l_v)³`, Fourier transforms, exact free
//! streaming, mollifiers, moments and snapshot I/O.
//!
//! # Conventions
//!
//! * `x_i = i·2π/n_x` on each retained spatial axis, `v_j = −l_v + j·Δv` with
//!   `Δv = 2l_v/n_v` on each velocity axis.
//! * Values are stored row-major: spatial indices outer, then `v₁, v₂, v₃`.
//! * The forward transform is unitary and uses physical coordinates,
//!   `F(η, ξ) = N^{−1/2} Σ f(x, v) e^{−i(η·x + ξ·v)}`, with integer `η` and
//!   `ξ = m·Δξ`, `Δξ = π/l_v`. The velocity phase reduces to a factor
//!   `(−1)^{m₁+m₂+m₃}` on top of a plain DFT.
//! * Norms carry the cell volume: `‖f‖₂² = Σ f² ΔxΔv` and likewise for modes,
//!   so Parseval holds with the same weight on both sides.
//! * Free streaming `f(x − t v, v)` multiplies the spatial Fourier coefficient
//!   at `η` by `e^{−iη·v t}`, which in the full transform is the shear
//!   `F(η, ξ) ← F(η, ξ + tη)`. The Nyquist spatial mode has no real-valued
//!   shear and is reduced to its real part; smooth fields carry no content there.

use crate::error::{Error, Result};
use crate::fft::{self, Cube};
use crate::msymbol::Vec3;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Discretized phase space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub dim_x: usize,
    pub n_x: usize,
    pub n_v: usize,
    pub l_v: f64,
}

impl PhaseGrid {
    pub fn new(dim_x: usize, n_x: usize, n_v: usize, l_v: f64) -> Result<Self> {
        if dim_x != 1 && dim_x != 3 {
            return Err(Error::InvalidParameter(format!("dim_x must be 1 or 3, got {dim_x}")));
        }
        if !n_x.is_power_of_two() || !n_v.is_power_of_two() || n_v < 2 {
            return Err(Error::InvalidParameter(format!(
                "n_x and n_v must be powers of two (n_v ≥ 2), got {n_x}, {n_v}"
            )));
        }
        if !(l_v > 0.0 && l_v.is_finite()) {
            return Err(Error::InvalidParameter(format!("l_v must be positive, got {l_v}")));
        }
        Ok(Self { dim_x, n_x, n_v, l_v })
    }

    pub fn n_xpts(&self) -> usize {
        self.n_x.pow(self.dim_x as u32)
    }
    pub fn n_vpts(&self) -> usize {
        self.n_v.pow(3)
    }
    pub fn len(&self) -> usize {
        self.n_xpts() * self.n_vpts()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn dx(&self) -> f64 {
        2.0 * PI / self.n_x as f64
    }
    pub fn dv(&self) -> f64 {
        2.0 * self.l_v / self.n_v as f64
    }
    pub fn dxi(&self) -> f64 {
        PI / self.l_v
    }
    pub fn cell_x(&self) -> f64 {
        self.dx().powi(self.dim_x as i32)
    }
    pub fn cell_v(&self) -> f64 {
        self.dv().powi(3)
    }
    pub fn cell(&self) -> f64 {
        self.cell_x() * self.cell_v()
    }

    /// Array shape: spatial axes followed by the three velocity axes.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.n_x; self.dim_x];
        s.extend([self.n_v; 3]);
        s
    }

    pub fn v_axis(&self) -> Vec<f64> {
        (0..self.n_v).map(|j| -self.l_v + j as f64 * self.dv()).collect()
    }

    pub fn x_coord(&self, ix: usize) -> Vec3 {
        let mut x = [0.0; 3];
        let mut rem = ix;
        for d in (0..self.dim_x).rev() {
            x[d] = (rem % self.n_x) as f64 * self.dx();
            rem /= self.n_x;
        }
        x
    }

    pub fn v_coord(&self, iv: usize) -> Vec3 {
        let n = self.n_v;
        let dv = self.dv();
        [
            -self.l_v + (iv / (n * n)) as f64 * dv,
            -self.l_v + ((iv / n) % n) as f64 * dv,
            -self.l_v + (iv % n) as f64 * dv,
        ]
    }

    /// Integer spatial frequency of x-bin `ix`.
    pub fn eta_of(&self, ix: usize) -> Vec3 {
        let mut e = [0.0; 3];
        let mut rem = ix;
        for d in (0..self.dim_x).rev() {
            e[d] = fft::signed_index(rem % self.n_x, self.n_x) as f64;
            rem /= self.n_x;
        }
        e
    }

    /// Velocity frequency `ξ` of v-bin `iv`.
    pub fn xi_of(&self, iv: usize) -> Vec3 {
        let n = self.n_v;
        let d = self.dxi();
        [
            fft::signed_index(iv / (n * n), n) as f64 * d,
            fft::signed_index((iv / n) % n, n) as f64 * d,
            fft::signed_index(iv % n, n) as f64 * d,
        ]
    }

    /// True if `iv` lies on the outermost layer of the velocity box.
    pub fn is_shell(&self, iv: usize) -> bool {
        let n = self.n_v;
        [iv / (n * n), (iv / n) % n, iv % n].iter().any(|&j| j == 0 || j == n - 1)
    }
}

/// `⟨v⟩ = (1 + |v|²)^{1/2}`.
pub fn japanese(v: &Vec3) -> f64 {
    (1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Real phase-space field.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn zeros(grid: PhaseGrid) -> Self {
        Self { grid, values: vec![0.0; grid.len()], time: 0.0 }
    }

    pub fn from_values(grid: PhaseGrid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field contains non-finite values".into()));
        }
        Ok(Self { grid, values, time })
    }

    /// Samples `f(x, v)` on the grid.
    pub fn from_fn<F: Fn(&Vec3, &Vec3) -> f64>(grid: PhaseGrid, f: F) -> Self {
        let nv = grid.n_vpts();
        let vs: Vec<Vec3> = (0..nv).map(|iv| grid.v_coord(iv)).collect();
        let mut values = Vec::with_capacity(grid.len());
        for ix in 0..grid.n_xpts() {
            let x = grid.x_coord(ix);
            values.extend(vs.iter().map(|v| f(&x, v)));
        }
        Self { grid, values, time: 0.0 }
    }

    /// Velocity slice at spatial index `ix`.
    pub fn x_slice(&self, ix: usize) -> &[f64] {
        let nv = self.grid.n_vpts();
        &self.values[ix * nv..(ix + 1) * nv]
    }

    pub fn x_slice_mut(&mut self, ix: usize) -> &mut [f64] {
        let nv = self.grid.n_vpts();
        &mut self.values[ix * nv..(ix + 1) * nv]
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell()).sqrt()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        }
        (self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.grid.cell()).powf(1.0 / p)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self − other` on a shared grid.
    pub fn difference(&self, other: &Field) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::ShapeMismatch { expected: self.grid.len(), got: other.grid.len() });
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Field { grid: self.grid, values, time: self.time })
    }

    /// Restriction to a grid with `n_x/rx` and `n_v/rv` points on the same box
    /// by keeping every `rx`-th and `rv`-th sample.
    pub fn subsample(&self, coarse: PhaseGrid) -> Result<Field> {
        let g = self.grid;
        if coarse.dim_x != g.dim_x
            || coarse.l_v != g.l_v
            || g.n_x % coarse.n_x != 0
            || g.n_v % coarse.n_v != 0
        {
            return Err(Error::InvalidParameter("incompatible coarse grid".into()));
        }
        let (rx, rv) = (g.n_x / coarse.n_x, g.n_v / coarse.n_v);
        let mut out = Field::zeros(coarse);
        out.time = self.time;
        let cn = coarse.n_v;
        for cx in 0..coarse.n_xpts() {
            let mut fx = 0;
            let mut rem = cx;
            let mut mul = 1;
            for _ in 0..g.dim_x {
                fx += (rem % coarse.n_x) * rx * mul;
                rem /= coarse.n_x;
                mul *= g.n_x;
            }
            let src = self.x_slice(fx);
            let dst = out.x_slice_mut(cx);
            for i in 0..cn {
                for j in 0..cn {
                    for k in 0..cn {
                        dst[(i * cn + j) * cn + k] =
                            src[((i * rv) * g.n_v + j * rv) * g.n_v + k * rv];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Fourier representation of a [`Field`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: PhaseGrid,
    pub modes: Vec<Complex64>,
    pub time: f64,
}

impl SpectralField {
    pub fn l2_norm(&self) -> f64 {
        (self.modes.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.cell()).sqrt()
    }

    /// `(η, ξ)` of mode `idx`.
    pub fn frequencies(&self, idx: usize) -> (Vec3, Vec3) {
        let nv = self.grid.n_vpts();
        (self.grid.eta_of(idx / nv), self.grid.xi_of(idx % nv))
    }
}

fn all_axes(grid: &PhaseGrid) -> Vec<usize> {
    (0..grid.dim_x + 3).collect()
}

fn velocity_sign(grid: &PhaseGrid, iv: usize) -> f64 {
    let n = grid.n_v;
    let parity = iv / (n * n) + (iv / n) % n + iv % n;
    if parity % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Unitary forward transform.
pub fn forward(f: &Field) -> SpectralField {
    let grid = f.grid;
    let mut modes: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::fft_axes(&mut modes, &grid.shape(), &all_axes(&grid), false);
    let scale = 1.0 / (grid.len() as f64).sqrt();
    let nv = grid.n_vpts();
    let signs: Vec<f64> = (0..nv).map(|iv| velocity_sign(&grid, iv) * scale).collect();
    for chunk in modes.chunks_mut(nv) {
        for (c, s) in chunk.iter_mut().zip(&signs) {
            *c *= s;
        }
    }
    SpectralField { grid, modes, time: f.time }
}

/// Inverse of [`forward`]; the imaginary part of the result is discarded.
pub fn inverse(spec: &SpectralField) -> Result<Field> {
    let grid = spec.grid;
    if spec.modes.len() != grid.len() {
        return Err(Error::ShapeMismatch { expected: grid.len(), got: spec.modes.len() });
    }
    let mut data = spec.modes.clone();
    let scale = 1.0 / (grid.len() as f64).sqrt();
    let nv = grid.n_vpts();
    let signs: Vec<f64> = (0..nv).map(|iv| velocity_sign(&grid, iv) * scale).collect();
    for chunk in data.chunks_mut(nv) {
        for (c, s) in chunk.iter_mut().zip(&signs) {
            *c *= s;
        }
    }
    fft::fft_axes(&mut data, &grid.shape(), &all_axes(&grid), true);
    Ok(Field { grid, values: data.iter().map(|c| c.re).collect(), time: spec.time })
}

/// Pointwise multiplication by a real symbol `m(η, ξ)`.
pub fn apply_multiplier<M: Fn(&Vec3, &Vec3) -> f64>(spec: &SpectralField, m: M) -> SpectralField {
    let grid = spec.grid;
    let nv = grid.n_vpts();
    let xis: Vec<Vec3> = (0..nv).map(|iv| grid.xi_of(iv)).collect();
    let mut out = spec.clone();
    for (ix, chunk) in out.modes.chunks_mut(nv).enumerate() {
        let eta = grid.eta_of(ix);
        for (c, xi) in chunk.iter_mut().zip(&xis) {
            *c *= m(&eta, xi);
        }
    }
    out
}

/// Checks `dt ∈ Δξ·ℤ` and returns the integer shift.
pub fn aligned_steps(grid: &PhaseGrid, dt: f64) -> Result<i64> {
    let k = dt / grid.dxi();
    let r = k.round();
    if (k - r).abs() > 1e-9 * r.abs().max(1.0) {
        return Err(Error::UnalignedStep { dt, dxi: grid.dxi() });
    }
    Ok(r as i64)
}

/// Spatial transform helpers: spatial axes only, velocity untouched.
fn spatial_forward(grid: &PhaseGrid, values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let axes: Vec<usize> = (0..grid.dim_x).collect();
    fft::fft_axes(&mut data, &grid.shape(), &axes, false);
    data
}

fn spatial_inverse(grid: &PhaseGrid, mut data: Vec<Complex64>) -> Vec<f64> {
    let axes: Vec<usize> = (0..grid.dim_x).collect();
    fft::fft_axes(&mut data, &grid.shape(), &axes, true);
    let s = 1.0 / grid.n_xpts() as f64;
    data.iter().map(|c| c.re * s).collect()
}

/// Exact free streaming over time `dt`: `f(x, v) ← f(x − dt·v, v)`.
pub fn transport_shear(f: &Field, dt: f64) -> Result<Field> {
    aligned_steps(&f.grid, dt)?;
    if dt == 0.0 {
        return Ok(f.clone());
    }
    let grid = f.grid;
    let nv = grid.n_vpts();
    let mut data = spatial_forward(&grid, &f.values);
    let vs: Vec<Vec3> = (0..nv).map(|iv| grid.v_coord(iv)).collect();
    for (ix, chunk) in data.chunks_mut(nv).enumerate() {
        let eta = grid.eta_of(ix);
        if eta == [0.0; 3] {
            continue;
        }
        for (c, v) in chunk.iter_mut().zip(&vs) {
            let phase = -(eta[0] * v[0] + eta[1] * v[1] + eta[2] * v[2]) * dt;
            *c *= Complex64::from_polar(1.0, phase);
        }
    }
    Ok(Field { grid, values: spatial_inverse(&grid, data), time: f.time + dt })
}

/// Mollifier family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MollifierKind {
    /// Compact C∞ bump of radius `a` in `(x, v)`, unit discrete mass.
    Bump,
    /// Fejér kernel in `x` only, nonnegative, degree `⌊2π/a⌋`.
    Fejer,
}

fn fejer_degree(grid: &PhaseGrid, a: f64) -> usize {
    let n = (2.0 * PI / a).floor().max(0.0) as usize;
    n.min(grid.n_x / 2 - 1)
}

fn fejer_weight(grid: &PhaseGrid, ix: usize, degree: usize) -> f64 {
    let eta = grid.eta_of(ix);
    let mut w = 1.0;
    for e in eta.iter().take(grid.dim_x) {
        w *= (1.0 - e.abs() / (degree as f64 + 1.0)).max(0.0);
    }
    w
}

fn periodic_offset(i: usize, n: usize) -> f64 {
    fft::signed_index(i, n) as f64
}

/// Smooths `f` at radius `a`.
pub fn mollify(f: &Field, a: f64, kind: MollifierKind) -> Result<Field> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("mollifier radius must be positive, got {a}")));
    }
    let grid = f.grid;
    match kind {
        MollifierKind::Fejer => {
            if grid.n_x < 4 {
                return Ok(f.clone());
            }
            let degree = fejer_degree(&grid, a);
            let nv = grid.n_vpts();
            let mut data = spatial_forward(&grid, &f.values);
            for (ix, chunk) in data.chunks_mut(nv).enumerate() {
                let w = fejer_weight(&grid, ix, degree);
                for c in chunk.iter_mut() {
                    *c *= w;
                }
            }
            Ok(Field { grid, values: spatial_inverse(&grid, data), time: f.time })
        }
        MollifierKind::Bump => {
            let shape = grid.shape();
            let nv = grid.n_vpts();
            let (dx, dv) = (grid.dx(), grid.dv());
            let mut kernel = vec![Complex64::default(); grid.len()];
            let mut mass = 0.0;
            for ix in 0..grid.n_xpts() {
                let mut rx2 = 0.0;
                let mut rem = ix;
                for _ in 0..grid.dim_x {
                    let o = periodic_offset(rem % grid.n_x, grid.n_x) * dx;
                    rx2 += o * o;
                    rem /= grid.n_x;
                }
                if rx2 >= a * a {
                    continue;
                }
                for iv in 0..nv {
                    let n = grid.n_v;
                    let ov = [iv / (n * n), (iv / n) % n, iv % n]
                        .map(|j| periodic_offset(j, n) * dv);
                    let r2 = (rx2 + ov[0] * ov[0] + ov[1] * ov[1] + ov[2] * ov[2]) / (a * a);
                    if r2 < 1.0 {
                        let w = (-1.0 / (1.0 - r2)).exp();
                        kernel[ix * nv + iv] = Complex64::new(w, 0.0);
                        mass += w;
                    }
                }
            }
            let mut data: Vec<Complex64> =
                f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let axes = all_axes(&grid);
            fft::fft_axes(&mut data, &shape, &axes, false);
            fft::fft_axes(&mut kernel, &shape, &axes, false);
            let s = 1.0 / (mass * grid.len() as f64);
            for (d, k) in data.iter_mut().zip(&kernel) {
                *d *= k.re * s;
            }
            fft::fft_axes(&mut data, &shape, &axes, true);
            Ok(Field { grid, values: data.iter().map(|c| c.re).collect(), time: f.time })
        }
    }
}

/// Smoothing of a spatial field (e.g. a density) by the compact bump of radius `a`.
///
/// The kernel is nonnegative with unit discrete mass, so positivity and the
/// mean are preserved. Below one grid cell it reduces to the identity.
pub fn mollify_spatial(grid: &PhaseGrid, rho: &[f64], a: f64) -> Result<Vec<f64>> {
    if rho.len() != grid.n_xpts() {
        return Err(Error::ShapeMismatch { expected: grid.n_xpts(), got: rho.len() });
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("mollifier radius must be positive, got {a}")));
    }
    let n = grid.n_x;
    let dx = grid.dx();
    let mut kernel = vec![Complex64::default(); grid.n_xpts()];
    let mut mass = 0.0;
    for (ix, k) in kernel.iter_mut().enumerate() {
        let mut r2 = 0.0;
        let mut rem = ix;
        for _ in 0..grid.dim_x {
            let o = periodic_offset(rem % n, n) * dx;
            r2 += o * o;
            rem /= n;
        }
        let r2 = r2 / (a * a);
        if r2 < 1.0 {
            let w = (-1.0 / (1.0 - r2)).exp();
            *k = Complex64::new(w, 0.0);
            mass += w;
        }
    }
    let shape = vec![n; grid.dim_x];
    let axes: Vec<usize> = (0..grid.dim_x).collect();
    let mut data: Vec<Complex64> = rho.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::fft_axes(&mut data, &shape, &axes, false);
    fft::fft_axes(&mut kernel, &shape, &axes, false);
    let s = 1.0 / (mass * grid.n_xpts() as f64);
    for (d, k) in data.iter_mut().zip(&kernel) {
        *d *= k.re * s;
    }
    fft::fft_axes(&mut data, &shape, &axes, true);
    Ok(data.iter().map(|c| c.re).collect())
}

/// `ρ(x) = ∫ f dv` by the rectangle rule.
pub fn density(f: &Field) -> Vec<f64> {
    let cv = f.grid.cell_v();
    (0..f.grid.n_xpts()).map(|ix| f.x_slice(ix).iter().sum::<f64>() * cv).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mass: f64,
    pub momentum: Vec3,
    /// `∫∫ |v|² f`, without the factor 1/2.
    pub energy: f64,
}

pub fn moments(f: &Field) -> Moments {
    let grid = f.grid;
    let nv = grid.n_vpts();
    let vs: Vec<Vec3> = (0..nv).map(|iv| grid.v_coord(iv)).collect();
    let mut m = Moments::default();
    for ix in 0..grid.n_xpts() {
        for (val, v) in f.x_slice(ix).iter().zip(&vs) {
            m.mass += val;
            for d in 0..3 {
                m.momentum[d] += val * v[d];
            }
            m.energy += val * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        }
    }
    let c = grid.cell();
    m.mass *= c;
    m.energy *= c;
    for p in m.momentum.iter_mut() {
        *p *= c;
    }
    m
}

/// `max ⟨v⟩^k |f|` over the grid.
pub fn weighted_sup_norm(f: &Field, k: f64) -> f64 {
    weighted_sup_filtered(f, k, |_| true)
}

/// `max ⟨v⟩^k |f|` over the outermost velocity layer.
pub fn shell_weighted_sup(f: &Field, k: f64) -> f64 {
    let grid = f.grid;
    weighted_sup_filtered(f, k, |iv| grid.is_shell(iv))
}

fn weighted_sup_filtered<P: Fn(usize) -> bool>(f: &Field, k: f64, keep: P) -> f64 {
    let grid = f.grid;
    let nv = grid.n_vpts();
    let w: Vec<Option<f64>> = (0..nv)
        .map(|iv| keep(iv).then(|| japanese(&grid.v_coord(iv)).powf(k)))
        .collect();
    let mut best = 0.0f64;
    for ix in 0..grid.n_xpts() {
        for (val, wt) in f.x_slice(ix).iter().zip(&w) {
            if let Some(wt) = wt {
                best = best.max(wt * val.abs());
            }
        }
    }
    best
}

/// Spectral derivatives on a single velocity cube.
///
/// First derivatives drop the Nyquist mode so that they are exactly
/// antisymmetric; the Laplacian is the composition of divergence and gradient.
pub struct VelocityOps {
    n: usize,
    k: Vec<f64>,
    cube: Cube,
}

impl VelocityOps {
    pub fn new(n_v: usize, l_v: f64) -> Self {
        let d = PI / l_v;
        let k = (0..n_v)
            .map(|j| if j == n_v / 2 { 0.0 } else { fft::signed_index(j, n_v) as f64 * d })
            .collect();
        Self { n: n_v, k, cube: Cube::new(n_v) }
    }

    pub fn for_grid(grid: &PhaseGrid) -> Self {
        Self::new(grid.n_v, grid.l_v)
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn wavevector(&self, idx: usize) -> Vec3 {
        let n = self.n;
        [self.k[idx / (n * n)], self.k[(idx / n) % n], self.k[idx % n]]
    }

    /// Unnormalized forward 3-D transform.
    pub fn forward(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.cube.transform(buf, false, scratch);
    }

    /// Normalized inverse 3-D transform.
    pub fn inverse(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        self.cube.transform(buf, true, scratch);
        let s = 1.0 / self.len() as f64;
        for c in buf.iter_mut() {
            *c *= s;
        }
    }

    /// Gradient in real space from a forward spectrum.
    pub fn gradient_from_spectrum(
        &self,
        spec: &[Complex64],
        scratch: &mut Vec<Complex64>,
    ) -> [Vec<Complex64>; 3] {
        let mut out: [Vec<Complex64>; 3] = Default::default();
        for (d, o) in out.iter_mut().enumerate() {
            *o = spec
                .iter()
                .enumerate()
                .map(|(i, c)| c * Complex64::new(0.0, self.wavevector(i)[d]))
                .collect();
            self.inverse(o, scratch);
        }
        out
    }

    /// Divergence in real space of a real-space vector field.
    pub fn divergence_packed(
        &self,
        mut comps: [Vec<Complex64>; 3],
        scratch: &mut Vec<Complex64>,
    ) -> Vec<Complex64> {
        let mut acc = vec![Complex64::default(); self.len()];
        for (d, c) in comps.iter_mut().enumerate() {
            self.forward(c, scratch);
            for (i, (a, v)) in acc.iter_mut().zip(c.iter()).enumerate() {
                *a += v * Complex64::new(0.0, self.wavevector(i)[d]);
            }
        }
        self.inverse(&mut acc, scratch);
        acc
    }

    /// Applies `−|k|²` to a forward spectrum and returns real space.
    pub fn laplacian_from_spectrum(
        &self,
        spec: &[Complex64],
        scratch: &mut Vec<Complex64>,
    ) -> Vec<Complex64> {
        let mut o: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let k = self.wavevector(i);
                c * -(k[0] * k[0] + k[1] * k[1] + k[2] * k[2])
            })
            .collect();
        self.inverse(&mut o, scratch);
        o
    }

    pub fn gradient(&self, f: &[f64]) -> [Vec<f64>; 3] {
        let mut scratch = Vec::new();
        let mut buf = pack(f, None);
        self.forward(&mut buf, &mut scratch);
        let g = self.gradient_from_spectrum(&buf, &mut scratch);
        g.map(|c| c.iter().map(|z| z.re).collect())
    }

    pub fn divergence(&self, g: [&[f64]; 3]) -> Vec<f64> {
        let mut scratch = Vec::new();
        let comps = g.map(|c| pack(c, None));
        self.divergence_packed(comps, &mut scratch).iter().map(|z| z.re).collect()
    }

    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut scratch = Vec::new();
        let mut buf = pack(f, None);
        self.forward(&mut buf, &mut scratch);
        self.laplacian_from_spectrum(&buf, &mut scratch).iter().map(|z| z.re).collect()
    }
}

/// Packs two real arrays as `a + i b`.
pub fn pack(a: &[f64], b: Option<&[f64]>) -> Vec<Complex64> {
    match b {
        Some(b) => a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect(),
        None => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
    }
}

const MAGIC: &[u8; 5] = b"MKIN1";

/// Writes a field in the MKIN1 layout: magic, `dim_x`, `n_x`, `n_v` as u32,
/// `l_v` and time as f64, then the values, all little-endian.
pub fn write_snapshot<P: AsRef<Path>>(path: P, f: &Field) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_snapshot_to(&mut w, f)?;
    w.flush()?;
    Ok(())
}

pub fn write_snapshot_to<W: Write>(w: &mut W, f: &Field) -> Result<()> {
    w.write_all(MAGIC)?;
    for d in [f.grid.dim_x, f.grid.n_x, f.grid.n_v] {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&f.grid.l_v.to_le_bytes())?;
    w.write_all(&f.time.to_le_bytes())?;
    for v in &f.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot<P: AsRef<Path>>(path: P) -> Result<Field> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_snapshot_from(&mut r)
}

pub fn read_snapshot_from<R: Read>(r: &mut R) -> Result<Field> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad snapshot magic".into()));
    }
    let mut u = [0u8; 4];
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        r.read_exact(&mut u)?;
        *d = u32::from_le_bytes(u) as usize;
    }
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let l_v = f64::from_le_bytes(b);
    r.read_exact(&mut b)?;
    let time = f64::from_le_bytes(b);
    let grid = PhaseGrid::new(dims[0], dims[1], dims[2], l_v)
        .map_err(|e| Error::Format(format!("bad snapshot header: {e}")))?;
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        r.read_exact(&mut b)
            .map_err(|_| Error::Format("snapshot truncated".into()))?;
        values.push(f64::from_le_bytes(b));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    parse_trailer(&rest)?;
    Ok(Field { grid, values, time })
}

const META_TAG: &[u8; 4] = b"META";

/// Writes a snapshot followed by a metadata trailer: `META`, a u32 LE byte
/// length and that many bytes of UTF-8 text.
pub fn write_snapshot_with_meta<P: AsRef<Path>>(path: P, f: &Field, meta: &str) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_snapshot_to(&mut w, f)?;
    w.write_all(META_TAG)?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reads a snapshot and its metadata trailer, if any.
pub fn read_snapshot_with_meta<P: AsRef<Path>>(path: P) -> Result<(Field, Option<String>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut head = Vec::new();
    r.read_to_end(&mut head)?;
    let mut cur = std::io::Cursor::new(&head);
    let field = read_snapshot_from(&mut cur)?;
    let used = 5 + 12 + 16 + 8 * field.values.len();
    Ok((field, parse_trailer(&head[used..])?))
}

fn parse_trailer(rest: &[u8]) -> Result<Option<String>> {
    if rest.is_empty() {
        return Ok(None);
    }
    if rest.len() < 8 || &rest[..4] != META_TAG {
        return Err(Error::Format("trailing bytes after snapshot".into()));
    }
    let len = u32::from_le_bytes([rest[4], rest[5], rest[6], rest[7]]) as usize;
    if rest.len() != 8 + len {
        return Err(Error::Format("metadata trailer length mismatch".into()));
    }
    String::from_utf8(rest[8..].to_vec())
        .map(Some)
        .map_err(|_| Error::Format("metadata trailer is not UTF-8".into()))
}

/// CSV of density profiles, one row per time: `t,rho_0,…,rho_{N−1}`.
pub fn write_density_csv<P: AsRef<Path>>(path: P, series: &[(f64, Vec<f64>)]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let n = series.first().map(|s| s.1.len()).unwrap_or(0);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..n).map(|i| format!("rho_{i}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (t, rho) in series {
        let row: Vec<String> =
            std::iter::once(format!("{t:.17e}")).chain(rho.iter().map(|v| format!("{v:.17e}"))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the numeric rows of a CSV written by this crate, skipping `#` lines and the header.
pub fn read_csv_rows<P: AsRef<Path>>(path: P) -> Result<Vec<Vec<f64>>> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    let mut header_seen = false;
    for line in r.lines() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse()).collect();
        rows.push(row.map_err(|e| Error::Format(format!("bad csv value: {e}")))?);
    }
    Ok(rows)
}
