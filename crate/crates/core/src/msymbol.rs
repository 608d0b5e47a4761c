//! The multiplier symbol `M(t, T, η, ξ)`, its ring-weighted variant `M_n`
//! and the transport commutator, with symbol-level property checks.
//!
//! Everything is a pure function of its arguments; `Φ` is always evaluated in
//! closed form. Quadrature appears only where a bound is checked against an
//! integral in the horizon variable.

use crate::error::{Error, Result};
use crate::quad;
use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm2(a: &Vec3) -> f64 {
    dot(a, a)
}

/// Parameters `(δ, ε)` of the plain symbol, with the exponent `p` kept explicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolParams {
    pub delta: f64,
    pub epsilon: f64,
    pub exponent_p: f64,
}

impl SymbolParams {
    /// Symbol with the canonical exponent `p = 1/2 + ε`.
    pub fn new(delta: f64, epsilon: f64) -> Result<Self> {
        Self::with_exponent(delta, epsilon, 0.5 + epsilon)
    }

    pub fn with_exponent(delta: f64, epsilon: f64, exponent_p: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(exponent_p > 0.0 && exponent_p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exponent_p must be positive, got {exponent_p}"
            )));
        }
        Ok(Self { delta, epsilon, exponent_p })
    }

    /// True when `p = 1/2 + ε`, the exponent for which the horizon-integral bound holds.
    pub fn has_canonical_exponent(&self) -> bool {
        (self.exponent_p - (0.5 + self.epsilon)).abs() <= 1e-12 * (1.0 + self.exponent_p)
    }
}

/// Parameters `(δ, β, n)` of the ring-weighted symbol `M_n`; `p` defaults to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedSymbolParams {
    pub delta: f64,
    pub beta: f64,
    pub ring_index: u32,
    pub exponent_p: f64,
}

impl WeightedSymbolParams {
    pub fn new(delta: f64, beta: f64, ring_index: u32) -> Result<Self> {
        Self::with_exponent(delta, beta, ring_index, 1.0)
    }

    pub fn with_exponent(delta: f64, beta: f64, ring_index: u32, exponent_p: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        if !(beta <= 2.0) {
            return Err(Error::InvalidParameter(format!("beta must be <= 2, got {beta}")));
        }
        if !(exponent_p > 0.0 && exponent_p.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "exponent_p must be positive, got {exponent_p}"
            )));
        }
        Ok(Self { delta, beta, ring_index, exponent_p })
    }

    /// Effective strength `δ·2^{βn}`.
    pub fn effective_delta(&self) -> f64 {
        self.delta * (self.beta * self.ring_index as f64).exp2()
    }

    /// Same parameters on another ring.
    pub fn on_ring(&self, ring_index: u32) -> Self {
        Self { ring_index, ..*self }
    }
}

/// A point `(t, T, ξ, η)`. `η` is stored as reals so it can be perturbed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    t: f64,
    horizon: f64,
    xi: Vec3,
    eta: Vec3,
}

impl PhasePoint {
    pub fn new(t: f64, horizon: f64, xi: Vec3, eta: Vec3) -> Result<Self> {
        if !(t.is_finite() && horizon.is_finite()) {
            return Err(Error::InvalidParameter("non-finite time".into()));
        }
        if t > horizon {
            return Err(Error::TimeOrder { t, horizon });
        }
        Ok(Self { t, horizon, xi, eta })
    }

    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn xi(&self) -> Vec3 {
        self.xi
    }
    pub fn eta(&self) -> Vec3 {
        self.eta
    }
    /// Remaining time `s = T − t ≥ 0`.
    pub fn span(&self) -> f64 {
        self.horizon - self.t
    }
}

/// `Φ` as a polynomial in `s = T − t`: `s(1+|ξ|²) − s²(ξ·η) + s³|η|²/3`.
///
/// Valid for any real `s`; the finite-difference checks evaluate it slightly
/// past `t = T`.
#[inline]
pub fn phase_integral_span(s: f64, xi: &Vec3, eta: &Vec3) -> f64 {
    s * (1.0 + norm2(xi)) - s * s * dot(xi, eta) + s * s * s * norm2(eta) / 3.0
}

/// `Φ(t,T,ξ,η) = ∫_t^T ⟨ξ + (t−τ)η⟩² dτ`.
pub fn phase_integral(p: &PhasePoint) -> f64 {
    phase_integral_span(p.span(), &p.xi, &p.eta)
}

#[inline]
fn symbol_from_phase(delta: f64, exponent_p: f64, phi: f64) -> f64 {
    (1.0 + delta * phi).powf(-exponent_p)
}

/// `M = (1 + δΦ)^{−p}`.
pub fn eval_m(sym: &SymbolParams, p: &PhasePoint) -> f64 {
    symbol_from_phase(sym.delta, sym.exponent_p, phase_integral(p))
}

/// `M_n = (1 + δ 2^{βn} Φ)^{−p}`.
pub fn eval_m_weighted(wsym: &WeightedSymbolParams, p: &PhasePoint) -> f64 {
    symbol_from_phase(wsym.effective_delta(), wsym.exponent_p, phase_integral(p))
}

/// `M` as a function of `s = T − t` and real `(ξ, η)`, no ordering check.
#[inline]
pub fn m_of_span(delta: f64, exponent_p: f64, s: f64, xi: &Vec3, eta: &Vec3) -> f64 {
    symbol_from_phase(delta, exponent_p, phase_integral_span(s, xi, eta))
}

/// Symbol of `[𝓜, ∂_t − v·∇_x]`: `−δ p ⟨ξ⟩² / (1 + δΦ) · M`.
///
/// With the transform convention of [`crate::spectral`], `(∂_t − η·∇_ξ)M`
/// equals the negative of this value.
pub fn transport_commutator_symbol(sym: &SymbolParams, p: &PhasePoint) -> f64 {
    let phi = phase_integral(p);
    let base = 1.0 + sym.delta * phi;
    let m = base.powf(-sym.exponent_p);
    -sym.delta * sym.exponent_p * (1.0 + norm2(&p.xi)) / base * m
}

/// Same multiplier for `M_n`, with `δ` replaced by `δ 2^{βn}`.
pub fn transport_commutator_symbol_weighted(wsym: &WeightedSymbolParams, p: &PhasePoint) -> f64 {
    let d = wsym.effective_delta();
    let phi = phase_integral(p);
    let base = 1.0 + d * phi;
    -d * wsym.exponent_p * (1.0 + norm2(&p.xi)) / base * base.powf(-wsym.exponent_p)
}

/// Central-difference approximation of `(∂_t − η·∇_ξ) M` with step `h`.
pub fn transport_derivative_fd(sym: &SymbolParams, p: &PhasePoint, h: f64) -> f64 {
    let m = |t: f64, xi: &Vec3| {
        m_of_span(sym.delta, sym.exponent_p, p.horizon - t, xi, &p.eta)
    };
    let dt = (m(p.t + h, &p.xi) - m(p.t - h, &p.xi)) / (2.0 * h);
    let mut adv = 0.0;
    for i in 0..3 {
        if p.eta[i] == 0.0 {
            continue;
        }
        let mut xp = p.xi;
        let mut xm = p.xi;
        xp[i] += h;
        xm[i] -= h;
        adv += p.eta[i] * (m(p.t, &xp) - m(p.t, &xm)) / (2.0 * h);
    }
    dt - adv
}

/// Result of a scalar bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// `∫_t^{T0} ⟨ξ⟩² M(t,T)² dT ≤ 2/(εδ)`, with the left side by adaptive quadrature in `T`.
pub fn check_time_integral_bound(
    sym: &SymbolParams,
    xi: Vec3,
    eta: Vec3,
    t: f64,
    t0: f64,
) -> Result<BoundCheck> {
    if !sym.has_canonical_exponent() {
        return Err(Error::Precondition(format!(
            "horizon-integral bound requires exponent_p = 1/2 + epsilon = {}, got {}",
            0.5 + sym.epsilon,
            sym.exponent_p
        )));
    }
    if !(t < t0) {
        return Err(Error::TimeOrder { t, horizon: t0 });
    }
    let bracket = 1.0 + norm2(&xi);
    let integrand = |s: f64| {
        let m = m_of_span(sym.delta, sym.exponent_p, s, &xi, &eta);
        bracket * m * m
    };
    let rhs = 2.0 / (sym.epsilon * sym.delta);
    // The integrand lives on the scale 1/(δ⟨ξ⟩²) near s = 0; split there so the
    // adaptive rule sees the layer.
    let span = t0 - t;
    let layer = (4.0 / (sym.delta * bracket)).min(span);
    let tol = 1e-12 * rhs;
    let mut lhs = quad::adaptive_simpson(&integrand, 0.0, layer, tol);
    if layer < span {
        let mut lo = layer;
        while lo < span {
            let hi = (lo * 8.0).min(span);
            lhs += quad::adaptive_simpson(&integrand, lo, hi, tol);
            lo = hi;
        }
    }
    Ok(BoundCheck { lhs, rhs, pass: lhs <= rhs })
}

/// Empirical constants of the symbol-derivative bounds.
///
/// `*_raw` is `|∇^α M / M| · (⟨ξ⟩ + (T−t)|η|)^{min(|α|,2)}`; the `eta_*_const`
/// fields divide the η-derivative values by `T`, the scaling of the η-derivative bound.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DerivativeBoundReport {
    pub samples: usize,
    pub xi_first_max: f64,
    pub xi_second_max: f64,
    pub eta_first_raw_max: f64,
    pub eta_second_raw_max: f64,
    pub eta_first_const_max: f64,
    pub eta_second_const_max: f64,
}

/// Per-sample values behind [`DerivativeBoundReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeSample {
    pub xi_first: f64,
    pub xi_second: f64,
    pub eta_first_raw: f64,
    pub eta_second_raw: f64,
}

fn richardson<F: Fn(f64) -> f64>(d: F, h: f64) -> f64 {
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

/// First and second derivative norms of `ln`-normalized `M` along ξ (`wrt_eta = false`) or η.
fn derivative_norms(sym: &SymbolParams, p: &PhasePoint, fd_step: f64, wrt_eta: bool) -> (f64, f64) {
    let s = p.span();
    let eval = |xi: Vec3, eta: Vec3| m_of_span(sym.delta, sym.exponent_p, s, &xi, &eta);
    let base = if wrt_eta { p.eta } else { p.xi };
    let scale = base.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let h = fd_step * scale;
    let at = |v: Vec3| if wrt_eta { eval(p.xi, v) } else { eval(v, p.eta) };
    let m0 = at(base);
    let mut grad = [0.0; 3];
    for (i, g) in grad.iter_mut().enumerate() {
        *g = richardson(
            |hh| {
                let mut a = base;
                let mut b = base;
                a[i] += hh;
                b[i] -= hh;
                (at(a) - at(b)) / (2.0 * hh)
            },
            h,
        ) / m0;
    }
    let mut hess_sq = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let d = richardson(
                |hh| {
                    if i == j {
                        let mut a = base;
                        let mut b = base;
                        a[i] += hh;
                        b[i] -= hh;
                        (at(a) - 2.0 * m0 + at(b)) / (hh * hh)
                    } else {
                        let shift = |si: f64, sj: f64| {
                            let mut v = base;
                            v[i] += si * hh;
                            v[j] += sj * hh;
                            at(v)
                        };
                        (shift(1.0, 1.0) - shift(1.0, -1.0) - shift(-1.0, 1.0) + shift(-1.0, -1.0))
                            / (4.0 * hh * hh)
                    }
                },
                h,
            ) / m0;
            hess_sq += d * d;
        }
    }
    (norm2(&grad).sqrt(), hess_sq.sqrt())
}

/// Empirical constants at a single point.
pub fn derivative_sample(sym: &SymbolParams, p: &PhasePoint, fd_step: f64) -> DerivativeSample {
    let weight = (1.0 + norm2(&p.xi)).sqrt() + p.span() * norm2(&p.eta).sqrt();
    let (xf, xs) = derivative_norms(sym, p, fd_step, false);
    let (ef, es) = derivative_norms(sym, p, fd_step, true);
    DerivativeSample {
        xi_first: xf * weight,
        xi_second: xs * weight * weight,
        eta_first_raw: ef * weight,
        eta_second_raw: es * weight * weight,
    }
}

/// Sweep [`derivative_sample`] over `samples`; requires `T < 1` at every sample.
pub fn check_derivative_bounds(
    sym: &SymbolParams,
    samples: &[PhasePoint],
    fd_step: f64,
) -> Result<DerivativeBoundReport> {
    let mut rep = DerivativeBoundReport { samples: samples.len(), ..Default::default() };
    for p in samples {
        if !(p.horizon < 1.0 && p.horizon > 0.0) {
            return Err(Error::Precondition(format!(
                "derivative bounds need 0 < T < 1, got T = {}",
                p.horizon
            )));
        }
        let d = derivative_sample(sym, p, fd_step);
        rep.xi_first_max = rep.xi_first_max.max(d.xi_first);
        rep.xi_second_max = rep.xi_second_max.max(d.xi_second);
        rep.eta_first_raw_max = rep.eta_first_raw_max.max(d.eta_first_raw);
        rep.eta_second_raw_max = rep.eta_second_raw_max.max(d.eta_second_raw);
        rep.eta_first_const_max = rep.eta_first_const_max.max(d.eta_first_raw / p.horizon);
        rep.eta_second_const_max = rep.eta_second_const_max.max(d.eta_second_raw / p.horizon);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pp(t: f64, horizon: f64, xi: Vec3, eta: Vec3) -> PhasePoint {
        PhasePoint::new(t, horizon, xi, eta).unwrap()
    }

    // Independent oracle: integrate the bracket directly.
    fn phi_oracle(p: &PhasePoint) -> f64 {
        let (xi, eta, t) = (p.xi(), p.eta(), p.t());
        let f = |tau: f64| {
            let v = [xi[0] + (t - tau) * eta[0], xi[1] + (t - tau) * eta[1], xi[2] + (t - tau) * eta[2]];
            1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
        };
        quad::adaptive_simpson(&f, t, p.horizon(), 1e-13)
    }

    #[test]
    fn phase_integral_examples() {
        assert_eq!(phase_integral(&pp(0.0, 0.0, [3.0, 1.0, 2.0], [1.0, 5.0, 0.0])), 0.0);
        let a = phase_integral(&pp(0.0, 2.0, [1.0, 0.0, 0.0], [0.0; 3]));
        assert!((a - 4.0).abs() < 1e-14);
        let b = phase_integral(&pp(0.0, 1.0, [0.0; 3], [1.0, 0.0, 0.0]));
        assert!((b - 4.0 / 3.0).abs() < 1e-14);
        let c = phase_integral(&pp(0.0, 1.0, [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]));
        assert!((c - 4.0 / 3.0).abs() < 1e-14);
        for p in [pp(0.0, 2.0, [1.0, 0.0, 0.0], [0.0; 3]), pp(0.0, 1.0, [1.0, 0.0, 0.0], [1.0, 0.0, 0.0])] {
            assert!((phase_integral(&p) - phi_oracle(&p)).abs() < 1e-10 * phi_oracle(&p));
        }
    }

    #[test]
    fn rejects_reversed_times() {
        assert!(matches!(PhasePoint::new(1.0, 0.5, [0.0; 3], [0.0; 3]), Err(Error::TimeOrder { .. })));
    }

    #[test]
    fn eval_m_examples() {
        let sym = SymbolParams::new(1.0, 0.5).unwrap();
        assert_eq!(eval_m(&sym, &pp(0.7, 0.7, [5.0, 1.0, 0.0], [2.0, 0.0, 1.0])), 1.0);
        assert!((eval_m(&sym, &pp(0.0, 1.0, [0.0; 3], [0.0; 3])) - 0.5).abs() < 1e-15);
        let tiny = SymbolParams::new(1e-14, 0.5).unwrap();
        assert!((eval_m(&tiny, &pp(0.0, 1.0, [2.0, 0.0, 0.0], [1.0, 1.0, 0.0])) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eval_m_weighted_examples() {
        let w = WeightedSymbolParams::new(0.25, 2.0, 1).unwrap();
        assert!((eval_m_weighted(&w, &pp(0.0, 1.0, [0.0; 3], [0.0; 3])) - 0.5).abs() < 1e-15);
        assert_eq!(eval_m_weighted(&w, &pp(0.3, 0.3, [1.0, 2.0, 3.0], [0.0; 3])), 1.0);
        let w0 = WeightedSymbolParams::with_exponent(0.7, 0.0, 5, 0.9).unwrap();
        let s = SymbolParams::with_exponent(0.7, 0.4, 0.9).unwrap();
        let p = pp(0.1, 0.8, [1.0, -2.0, 0.5], [3.0, 0.0, -1.0]);
        assert_eq!(eval_m_weighted(&w0, &p), eval_m(&s, &p));
    }

    #[test]
    fn weighted_rejects_large_beta() {
        assert!(WeightedSymbolParams::new(1.0, 2.5, 0).is_err());
    }

    #[test]
    fn commutator_examples() {
        let sym = SymbolParams::new(0.3, 0.2).unwrap();
        let v = transport_commutator_symbol(&sym, &pp(0.5, 0.5, [0.0; 3], [1.0, 0.0, 0.0]));
        assert!((v.abs() - 0.3 * 0.7).abs() < 1e-15);
        let sym = SymbolParams::new(1.0, 0.5).unwrap();
        let v = transport_commutator_symbol(&sym, &pp(0.0, 1.0, [0.0; 3], [0.0; 3]));
        assert!((v.abs() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn commutator_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let sym = SymbolParams::new(rng.gen_range(0.1..2.0), rng.gen_range(0.1..1.0)).unwrap();
            let horizon = rng.gen_range(0.2..1.0);
            let t = rng.gen_range(0.0..horizon * 0.9);
            let xi = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let eta = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let p = pp(t, horizon, xi, eta);
            let exact = -transport_commutator_symbol(&sym, &p);
            let fd = transport_derivative_fd(&sym, &p, 1e-4);
            assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "{fd} vs {exact}");
        }
    }

    #[test]
    fn time_integral_bound_examples() {
        let sym = SymbolParams::new(1.0, 0.5).unwrap();
        let r = check_time_integral_bound(&sym, [0.0; 3], [0.0; 3], 0.0, 1.0).unwrap();
        // ∫₀¹ (1+s)⁻² ds = 1/2
        assert!((r.lhs - 0.5).abs() < 1e-10);
        assert_eq!(r.rhs, 4.0);
        assert!(r.pass);
        let r = check_time_integral_bound(&sym, [1e3, 0.0, 0.0], [5.0, 1.0, 0.0], 0.0, 1.0).unwrap();
        assert!(r.pass, "{r:?}");
        let bad = SymbolParams::with_exponent(1.0, 0.5, 2.0).unwrap();
        assert!(matches!(
            check_time_integral_bound(&bad, [0.0; 3], [0.0; 3], 0.0, 1.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn derivative_bound_examples() {
        let sym = SymbolParams::new(1.0, 0.5).unwrap();
        let d = derivative_sample(&sym, &pp(0.0, 0.5, [0.0; 3], [0.0; 3]), 1e-4);
        assert!(d.xi_first.abs() < 1e-9);

        // η-derivative constant scales with T once δ(T−t)⟨ξ⟩² ≫ 1.
        let xi = [100.0, 0.0, 0.0];
        let eta = [1.0, 0.0, 0.0];
        let full = derivative_sample(&sym, &pp(0.0, 0.5, xi, eta), 1e-4).eta_first_raw;
        let half = derivative_sample(&sym, &pp(0.0, 0.25, xi, eta), 1e-4).eta_first_raw;
        let ratio = half / full;
        assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn derivative_constants_saturate() {
        use rand::{Rng, SeedableRng};
        let sym = SymbolParams::new(1.0, 0.5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut pts = Vec::new();
        for _ in 0..400 {
            let horizon = rng.gen_range(0.05..0.95);
            let t = rng.gen_range(0.0..horizon);
            let r = 10f64.powf(rng.gen_range(-1.0..2.0));
            let xi = [r * rng.gen_range(-1.0..1.0), r * rng.gen_range(-1.0..1.0), r * rng.gen_range(-1.0..1.0)];
            let eta = [rng.gen_range(-20.0..20.0f64).round(), rng.gen_range(-20.0..20.0f64).round(), 0.0];
            pts.push(pp(t, horizon, xi, eta));
        }
        let small = check_derivative_bounds(&sym, &pts[..200], 1e-4).unwrap();
        let big = check_derivative_bounds(&sym, &pts, 1e-4).unwrap();
        for (a, b) in [
            (small.xi_first_max, big.xi_first_max),
            (small.xi_second_max, big.xi_second_max),
            (small.eta_first_const_max, big.eta_first_const_max),
        ] {
            assert!(a.is_finite() && b.is_finite());
            assert!(b <= 2.0 * a, "constant grew from {a} to {b}");
        }
    }

    proptest! {
        #[test]
        fn symbol_in_unit_interval(
            delta in 1e-3f64..10.0, eps in 1e-3f64..2.0, t in 0.0f64..1.0, s in 0.0f64..2.0,
            x0 in -50.0f64..50.0, x1 in -50.0f64..50.0, e0 in -20i32..20, e1 in -20i32..20,
        ) {
            let sym = SymbolParams::new(delta, eps).unwrap();
            let p = pp(t, t + s, [x0, x1, 0.0], [e0 as f64, e1 as f64, 0.0]);
            let m = eval_m(&sym, &p);
            prop_assert!(m > 0.0 && m <= 1.0);
        }

        #[test]
        fn symbol_monotone_in_delta_and_exponent(
            delta in 1e-3f64..5.0, eps in 1e-3f64..1.0, s in 0.0f64..2.0,
            x0 in -10.0f64..10.0, e0 in -5i32..5,
        ) {
            let p = pp(0.0, s, [x0, 0.0, 0.0], [e0 as f64, 0.0, 0.0]);
            let a = eval_m(&SymbolParams::new(delta, eps).unwrap(), &p);
            let b = eval_m(&SymbolParams::new(2.0 * delta, eps).unwrap(), &p);
            let c = eval_m(&SymbolParams::new(delta, 2.0 * eps).unwrap(), &p);
            prop_assert!(b <= a);
            prop_assert!(c <= a);
        }

        #[test]
        fn closed_form_matches_quadrature(
            t in 0.0f64..1.0, s in 0.0f64..3.0,
            x0 in -5.0f64..5.0, x1 in -5.0f64..5.0, x2 in -5.0f64..5.0,
            e0 in -6i32..6, e1 in -6i32..6, e2 in -6i32..6,
        ) {
            let p = pp(t, t + s, [x0, x1, x2], [e0 as f64, e1 as f64, e2 as f64]);
            let exact = phi_oracle(&p);
            prop_assert!((phase_integral(&p) - exact).abs() <= 1e-10 * exact.max(1e-300));
        }
    }
}
