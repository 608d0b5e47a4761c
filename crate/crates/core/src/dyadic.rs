//! Smooth partition of unity on dyadic velocity rings.
//!
//! The profiles are
//!
//! * `φ₀(r) = 1 − s(2(r − 3))`, equal to 1 on `[0, 3]` and 0 from `r = 3.5`,
//! * `φ₁(r) = s(r − 2)·(1 − s(r − 7))`, equal to 1 on `[3, 7]` and supported in `[2, 8]`,
//! * `φ_k(r) = φ₁(2^{1−k} r)` for `k ≥ 1`, supported in `[2^k, 2^{k+2}]`,
//!
//! with the smooth step `s(x) = σ(x)/(σ(x) + σ(1−x))`, `σ(x) = e^{−1/x}`.
//! Then `θ_k = φ_k / Σ_j φ_j`.
//!
//! The transition of `φ₀` is compressed to half width so that ring 1 is
//! already twice as steep as ring 2. With a unit-width transition rings 1 and
//! 2 would share the same steepest ramp.

use crate::error::{Error, Result};
use crate::msymbol::Vec3;

#[inline]
fn sigma(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// C∞ step, 0 for `x ≤ 0` and 1 for `x ≥ 1`.
#[inline]
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = sigma(x);
        a / (a + sigma(1.0 - x))
    }
}

/// `φ₀` evaluated directly.
pub fn bump0(r: f64) -> f64 {
    1.0 - smooth_step(2.0 * (r - 3.0))
}

/// `φ₁` evaluated directly.
pub fn bump1(r: f64) -> f64 {
    smooth_step(r - 2.0) * (1.0 - smooth_step(r - 7.0))
}

/// Uniform table of a profile on its transition zones with 4-point cubic interpolation.
///
/// Outside the listed transition intervals the profile is exactly 0 or 1 and
/// the table returns those values exactly.
#[derive(Debug, Clone)]
struct RampTable {
    lo: f64,
    h: f64,
    values: Vec<f64>,
}

impl RampTable {
    fn new<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> Self {
        let h = (hi - lo) / n as f64;
        // two ghost points on each side keep the stencil inside the table
        let values = (0..n + 5).map(|i| f(lo + (i as f64 - 2.0) * h)).collect();
        Self { lo, h, values }
    }

    fn eval(&self, x: f64) -> f64 {
        let u = (x - self.lo) / self.h + 2.0;
        let i = (u.floor() as usize).clamp(1, self.values.len() - 3);
        let t = u - i as f64;
        let (p0, p1, p2, p3) = (
            self.values[i - 1],
            self.values[i],
            self.values[i + 1],
            self.values[i + 2],
        );
        // cubic Lagrange through nodes −1, 0, 1, 2
        let v = -p0 * t * (t - 1.0) * (t - 2.0) / 6.0
            + p1 * (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
            - p2 * (t + 1.0) * t * (t - 2.0) / 2.0
            + p3 * (t + 1.0) * t * (t - 1.0) / 6.0;
        v.clamp(0.0, 1.0)
    }
}

const TABLE_POINTS_PER_UNIT: usize = 2048;

/// The family `θ_k`, `k = 0..=n_max`, on the radial range `[0, 2^{n_max+1}]`.
#[derive(Debug, Clone)]
pub struct DyadicPartition {
    n_max: u32,
    ramp0: RampTable,
    rise1: RampTable,
    fall1: RampTable,
}

impl DyadicPartition {
    pub fn new(n_max: u32) -> Result<Self> {
        if n_max > 60 {
            return Err(Error::InvalidParameter(format!("n_max too large: {n_max}")));
        }
        let n = TABLE_POINTS_PER_UNIT;
        Ok(Self {
            n_max,
            ramp0: RampTable::new(bump0, 3.0, 3.5, n / 2),
            rise1: RampTable::new(|r| smooth_step(r - 2.0), 2.0, 3.0, n),
            fall1: RampTable::new(|r| 1.0 - smooth_step(r - 7.0), 7.0, 8.0, n),
        })
    }

    /// Partition covering the corner of the velocity box `[−l_v, l_v)³`.
    pub fn for_velocity_box(l_v: f64) -> Result<Self> {
        if !(l_v > 0.0) {
            return Err(Error::InvalidParameter(format!("l_v must be positive, got {l_v}")));
        }
        let n_max = (3f64.sqrt() * l_v).log2().ceil().max(0.0) as u32 + 1;
        Self::new(n_max)
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    /// Largest radius at which the materialized rings sum to one.
    pub fn radial_max(&self) -> f64 {
        (self.n_max as f64 + 1.0).exp2()
    }

    /// `φ_k(r)` evaluated directly.
    pub fn bump(&self, k: u32, r: f64) -> f64 {
        if k == 0 {
            bump0(r)
        } else {
            bump1(r * (1.0 - k as f64).exp2())
        }
    }

    fn bump_tabulated(&self, k: u32, r: f64) -> f64 {
        if k == 0 {
            if r <= 3.0 {
                1.0
            } else if r >= 3.5 {
                0.0
            } else {
                self.ramp0.eval(r)
            }
        } else {
            let y = r * (1.0 - k as f64).exp2();
            if y <= 2.0 || y >= 8.0 {
                0.0
            } else if (3.0..=7.0).contains(&y) {
                1.0
            } else if y < 3.0 {
                self.rise1.eval(y)
            } else {
                self.fall1.eval(y)
            }
        }
    }

    /// Rings whose bump can be nonzero at radius `r`.
    fn candidate_rings(&self, r: f64) -> std::ops::RangeInclusive<u32> {
        if r < 2.0 {
            return 0..=0;
        }
        let j = r.log2().floor() as i64;
        let lo = (j - 2).max(0) as u32;
        let hi = (j.max(0) as u32).min(self.n_max);
        lo..=hi
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        if !(r >= 0.0 && r <= self.radial_max()) {
            return Err(Error::OutOfRange { radius: r, max: self.radial_max() });
        }
        Ok(())
    }

    /// `θ_k(r)` from direct bump evaluation.
    pub fn theta_radial(&self, k: u32, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        if k > self.n_max {
            return Err(Error::InvalidParameter(format!(
                "ring {k} exceeds n_max = {}",
                self.n_max
            )));
        }
        let num = self.bump(k, r);
        if num == 0.0 {
            return Ok(0.0);
        }
        let den: f64 = self.candidate_rings(r).map(|j| self.bump(j, r)).sum();
        Ok(num / den)
    }

    /// All `θ_k(r)`, `k = 0..=n_max`, from direct evaluation.
    pub fn thetas_radial(&self, r: f64) -> Result<Vec<f64>> {
        self.check_radius(r)?;
        let mut out = vec![0.0; self.n_max as usize + 1];
        let mut den = 0.0;
        for j in self.candidate_rings(r) {
            let b = self.bump(j, r);
            out[j as usize] = b;
            den += b;
        }
        for v in out.iter_mut() {
            *v /= den;
        }
        Ok(out)
    }

    /// Nonzero `(k, θ_k(r))` pairs from the interpolation tables, normalized
    /// so the weights sum to one up to rounding.
    pub fn active_rings(&self, r: f64) -> Result<Vec<(u32, f64)>> {
        self.check_radius(r)?;
        let mut out: Vec<(u32, f64)> = self
            .candidate_rings(r)
            .map(|j| (j, self.bump_tabulated(j, r)))
            .filter(|(_, b)| *b > 0.0)
            .collect();
        let den: f64 = out.iter().map(|(_, b)| b).sum();
        for (_, b) in out.iter_mut() {
            *b /= den;
        }
        Ok(out)
    }

    /// Inner and outer radius of `V_k`.
    pub fn ring_bounds(k: u32) -> (f64, f64) {
        if k == 0 {
            (0.0, 4.0)
        } else {
            ((k as f64).exp2(), (k as f64 + 2.0).exp2())
        }
    }
}

fn radius(v: &Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// `θ_k(v)` for a velocity vector.
pub fn eval_theta(part: &DyadicPartition, k: u32, v: &Vec3) -> Result<f64> {
    part.theta_radial(k, radius(v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionReport {
    pub samples: usize,
    pub max_sum_error: f64,
    pub min_sum_squares: f64,
    pub support_violations: usize,
    /// Largest number of simultaneously nonzero rings seen.
    pub max_active: usize,
    /// True if every sample had only consecutive rings active.
    pub consecutive_only: bool,
}

/// Checks `Σθ_k = 1`, `Σθ_k² ≥ 1/3` and supports on the given sample velocities.
pub fn verify_partition(part: &DyadicPartition, samples: &[Vec3]) -> Result<PartitionReport> {
    let mut rep = PartitionReport {
        samples: samples.len(),
        max_sum_error: 0.0,
        min_sum_squares: f64::INFINITY,
        support_violations: 0,
        max_active: 0,
        consecutive_only: true,
    };
    for v in samples {
        let r = radius(v);
        let th = part.thetas_radial(r)?;
        let sum: f64 = th.iter().sum();
        let sq: f64 = th.iter().map(|t| t * t).sum();
        rep.max_sum_error = rep.max_sum_error.max((sum - 1.0).abs());
        rep.min_sum_squares = rep.min_sum_squares.min(sq);
        let active: Vec<usize> = (0..th.len()).filter(|&k| th[k] > 0.0).collect();
        rep.max_active = rep.max_active.max(active.len());
        if active.windows(2).any(|w| w[1] != w[0] + 1) {
            rep.consecutive_only = false;
        }
        for &k in &active {
            let (lo, hi) = DyadicPartition::ring_bounds(k as u32);
            let inside = if k == 0 { r < hi } else { r > lo && r < hi };
            if !inside {
                rep.support_violations += 1;
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingDerivative {
    pub k: u32,
    pub grad_sup: f64,
    pub hess_sup: f64,
    /// `sup|∇θ_k|·2^k`
    pub grad_scaled: f64,
    /// `sup|∇²θ_k|·2^{2k}`
    pub hess_scaled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeDecayReport {
    pub rings: Vec<RingDerivative>,
    /// `grad_sup[k_{i+1}] / grad_sup[k_i]` for consecutive entries of the ring list.
    pub halving_ratios: Vec<f64>,
    /// `sup_r Σ_k ⟨r⟩|θ_k'(r)|` over the materialized range.
    pub weighted_gradient_sum_sup: f64,
}

const SCAN_POINTS: usize = 8192;

fn radial_derivatives(part: &DyadicPartition, k: u32, r: f64, h: f64) -> Option<(f64, f64)> {
    let f = |x: f64| part.theta_radial(k, x).ok();
    let (m, c, p) = (f(r - h)?, f(r)?, f(r + h)?);
    Some(((p - m) / (2.0 * h), (p - 2.0 * c + m) / (h * h)))
}

/// Empirical `sup|∇θ_k|` and `sup|∇²θ_k|` from central differences in the radius.
///
/// The step for ring `k` is `fd_step·2^k`. For a radial function the gradient
/// norm is `|θ'|` and the Hessian Frobenius norm is `(θ''² + 2(θ'/r)²)^{1/2}`.
pub fn verify_derivative_decay(
    part: &DyadicPartition,
    k_list: &[u32],
    fd_step: f64,
) -> Result<DerivativeDecayReport> {
    let mut rings = Vec::with_capacity(k_list.len());
    for &k in k_list {
        if k > part.n_max() {
            return Err(Error::InvalidParameter(format!("ring {k} exceeds n_max")));
        }
        let scale = (k as f64).exp2();
        let h = fd_step * scale;
        let (lo, hi) = DyadicPartition::ring_bounds(k);
        let hi = hi.min(part.radial_max());
        let mut grad_sup: f64 = 0.0;
        let mut hess_sup: f64 = 0.0;
        for i in 0..=SCAN_POINTS {
            let r = lo + (hi - lo) * i as f64 / SCAN_POINTS as f64;
            if r - h < 0.0 || r + h > part.radial_max() {
                continue;
            }
            if let Some((d1, d2)) = radial_derivatives(part, k, r, h) {
                grad_sup = grad_sup.max(d1.abs());
                let hess = (d2 * d2 + 2.0 * (d1 / r.max(h)).powi(2)).sqrt();
                hess_sup = hess_sup.max(hess);
            }
        }
        rings.push(RingDerivative {
            k,
            grad_sup,
            hess_sup,
            grad_scaled: grad_sup * scale,
            hess_scaled: hess_sup * scale * scale,
        });
    }
    let halving_ratios = rings.windows(2).map(|w| w[1].grad_sup / w[0].grad_sup).collect();

    let rmax = part.radial_max();
    let mut weighted_gradient_sum_sup: f64 = 0.0;
    let n = 16 * SCAN_POINTS;
    for i in 1..n {
        let r = rmax * i as f64 / n as f64;
        let h = fd_step * r.max(1.0);
        if r + h > rmax || r - h < 0.0 {
            continue;
        }
        let (a, b) = (part.thetas_radial(r - h)?, part.thetas_radial(r + h)?);
        let s: f64 = a.iter().zip(&b).map(|(x, y)| ((y - x) / (2.0 * h)).abs()).sum();
        weighted_gradient_sum_sup = weighted_gradient_sum_sup.max((1.0 + r * r).sqrt() * s);
    }
    Ok(DerivativeDecayReport { rings, halving_ratios, weighted_gradient_sum_sup })
}
