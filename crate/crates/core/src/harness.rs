//! Twin-run stability experiments and the M-weighted energy functionals.
//!
//! A twin run integrates two solutions `f` and `g` whose data differ by a
//! controlled perturbation and measures their distance together with the
//! functionals that drive the uniqueness argument:
//!
//! * `‖w‖²_{L²_{t,x,v}}` on `[0, T₀]`, with `w = ⟨v⟩^m (f − g)`;
//! * the dissipation `Σ_n ∫₀^{T₀}∫₀^T ‖2^{βn/2} ∇_v M_n w_n‖² dt dT`, where
//!   `w_n = θ_n w` and `M_n` is applied with span `s = T − t`;
//! * the unweighted quantity `∫∫ ‖∇_v M w‖²`, which must stay below
//!   `(2/(εδ))‖w‖²_{L²_{t,x,v}}`.
//!
//! Time integrals use trapezoidal weights on the snapshot cadence.

use crate::dyadic::DyadicPartition;
use crate::error::{Error, Result};
use crate::fft;
use crate::landau::weighted_field;
use crate::msymbol::{phase_integral_span, SymbolParams, WeightedSymbolParams};
use crate::quad;
use crate::solver::{InitialData, Model, Solver, SolverConfig, Trajectory};
use crate::spectral::{self, japanese, Field, MollifierKind, PhaseGrid};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Relative tolerance used when matching snapshot times of two runs.
const TIME_MATCH_TOL: f64 = 1e-9;
/// Modes per parallel work item; fixed so that reductions are reproducible.
const MODE_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    /// `g₀ = f₀ + δ₀ b` with a smooth nonnegative bump `b`.
    Bump,
    /// `g` runs on a grid refined by two in `x` and `v` when `δ₀ > 0`.
    Resolution,
    /// `g` runs with step `dt/2` when `δ₀ > 0`.
    Dt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub magnitude: f64,
}

/// Symbol used by the energy functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SymbolSpec {
    /// `M` with exponent `p`, applied to `w` directly.
    Plain(SymbolParams),
    /// `M_n` applied to each ring piece `θ_n w`.
    Weighted(WeightedSymbolParams),
}

impl SymbolSpec {
    /// Plain symbol used for the field-level commutator experiment.
    pub fn plain(&self) -> Result<SymbolParams> {
        match *self {
            SymbolSpec::Plain(s) => Ok(s),
            SymbolSpec::Weighted(w) => {
                SymbolParams::with_exponent(w.delta, (w.exponent_p - 0.5).max(f64::MIN_POSITIVE), w.exponent_p)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SymbolSpec::Plain(s) => SymbolParams::with_exponent(s.delta, s.epsilon, s.exponent_p).map(|_| ()),
            SymbolSpec::Weighted(w) => {
                WeightedSymbolParams::with_exponent(w.delta, w.beta, w.ring_index, w.exponent_p).map(|_| ())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: PhaseGrid,
    pub base_run: SolverConfig,
    pub initial: InitialData,
    pub perturbation: Perturbation,
    pub symbol: SymbolSpec,
    /// Diagnostic horizon `T₀ ≤ t_end`.
    pub t0: f64,
    /// Strictly decreasing mollifier radii.
    pub mollifier_radii: Vec<f64>,
    /// Weight exponent `m` of `w = ⟨v⟩^m (f − g)`.
    pub ring_m: f64,
    /// Horizons of the commutator experiment run on `g(T₀)`; empty skips it.
    #[serde(default)]
    pub commutator_horizons: Vec<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        self.base_run.validate(&self.grid)?;
        self.symbol.validate()?;
        let d = self.perturbation.magnitude;
        if !(d >= 0.0 && d.is_finite()) {
            return bad(format!("perturbation magnitude must be ≥ 0, got {d}"));
        }
        if !(self.t0 >= 0.0 && self.t0 <= self.base_run.t_end) {
            return bad(format!("T0 = {} must lie in [0, t_end = {}]", self.t0, self.base_run.t_end));
        }
        let p = &self.base_run.params;
        let m = self.ring_m;
        if !(m > 3.0 && m <= p.k0 && m + p.beta <= p.k0) {
            return bad(format!("ring_m = {m} needs 3 < m ≤ k0 and m + beta ≤ k0 (k0 = {}, beta = {})", p.k0, p.beta));
        }
        check_radii(&self.mollifier_radii)?;
        if self.commutator_horizons.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad("commutator horizons must be positive".into());
        }
        if self.perturbation.kind == PerturbationKind::Dt && d > 0.0 {
            spectral::aligned_steps(&self.grid, 0.5 * self.base_run.dt)?;
        }
        Ok(())
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidParameter("mollifier radii must be positive".into()));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("mollifier radii must be strictly decreasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

impl CheckStatus {
    pub fn label(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        }
    }
}

/// A named comparison of a measured value against a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub status: CheckStatus,
    pub note: String,
}

impl Check {
    pub fn new(name: &str, measured: f64, bound: f64, pass: bool) -> Self {
        let ok = pass && !measured.is_nan();
        Self {
            name: name.into(),
            measured,
            bound,
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            note: String::new(),
        }
    }

    pub fn skipped(name: &str, reason: &str) -> Self {
        Self {
            name: name.into(),
            measured: f64::NAN,
            bound: f64::NAN,
            status: CheckStatus::Skipped,
            note: reason.into(),
        }
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

/// Energy functionals of a `w` trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedEnergy {
    /// `∫₀^{T₀} ‖w‖² dt`.
    pub base: f64,
    /// `Σ_n 2^{βn} ∫₀^{T₀}∫₀^T ‖∇_v M_n w_n‖² dt dT` (a single term for the plain symbol).
    pub dissipation: f64,
    /// The same without the `2^{βn}` factors.
    pub lapl_lhs: f64,
    /// `Σ_n 2/(ε_n δ_n) ∫₀^{T₀}‖w_n‖²`, or `None` when `p ≤ 1/2` or the
    /// plain exponent is not `1/2 + ε`.
    pub lapl_bound: Option<f64>,
}

/// Trapezoid weights of `nodes` on `[nodes[0], nodes[last]]`.
fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = 0.5 * (nodes[i] - nodes[i - 1]);
        w[i - 1] += h;
        w[i] += h;
    }
    w
}

struct Ring {
    theta: Option<Vec<f64>>,
    delta: f64,
    exponent_p: f64,
    scale: f64,
    lapl_factor: Option<f64>,
}

fn rings_for(sym: &SymbolSpec, grid: &PhaseGrid) -> Result<Vec<Ring>> {
    match *sym {
        SymbolSpec::Plain(s) => Ok(vec![Ring {
            theta: None,
            delta: s.delta,
            exponent_p: s.exponent_p,
            scale: 1.0,
            lapl_factor: s.has_canonical_exponent().then(|| 2.0 / (s.epsilon * s.delta)),
        }]),
        SymbolSpec::Weighted(w) => {
            let part = DyadicPartition::for_velocity_box(grid.l_v)?;
            let thetas = ring_weights(grid, &part)?;
            let eps = w.exponent_p - 0.5;
            Ok(thetas
                .into_iter()
                .enumerate()
                .map(|(n, theta)| {
                    let wn = w.on_ring(n as u32);
                    let d = wn.effective_delta();
                    Ring {
                        theta: Some(theta),
                        delta: d,
                        exponent_p: w.exponent_p,
                        scale: (w.beta * n as f64).exp2(),
                        lapl_factor: (eps > 0.0).then(|| 2.0 / (eps * d)),
                    }
                })
                .collect())
        }
    }
}

/// `θ_n(v)` on the velocity grid for every materialized ring.
fn ring_weights(grid: &PhaseGrid, part: &DyadicPartition) -> Result<Vec<Vec<f64>>> {
    let nv = grid.n_vpts();
    let mut out = vec![vec![0.0; nv]; part.n_max() as usize + 1];
    for iv in 0..nv {
        let v = grid.v_coord(iv);
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        for (k, th) in part.active_rings(r)? {
            out[k as usize][iv] = th;
        }
    }
    Ok(out)
}

/// Full set of energy functionals of the trajectory `w` on `[0, T₀]`.
///
/// Snapshots must be in increasing time order and start at `t = 0`; those past
/// `T₀` are ignored.
pub fn energy_functionals(w: &[Field], sym: &SymbolSpec, t0: f64) -> Result<WeightedEnergy> {
    let Some(first) = w.first() else { return Ok(WeightedEnergy::default()) };
    let grid = first.grid;
    if w.iter().any(|f| f.grid != grid) {
        return Err(Error::Precondition("all snapshots must share a grid".into()));
    }
    if w.windows(2).any(|p| p[1].time <= p[0].time) {
        return Err(Error::Precondition("snapshot times must increase".into()));
    }
    let tol = TIME_MATCH_TOL * (1.0 + t0.abs());
    let nodes: Vec<&Field> = w.iter().take_while(|f| f.time <= t0 + tol).collect();
    if nodes.is_empty() {
        return Ok(WeightedEnergy::default());
    }
    let times: Vec<f64> = nodes.iter().map(|f| f.time).collect();
    let omega = trapezoid_weights(&times);
    let base: f64 = nodes.iter().zip(&omega).map(|(f, o)| o * f.l2_norm().powi(2)).sum();

    let k = times.len();
    // ν[j][i]: inner trapezoid weight of node i on [t_0, t_j]
    let nu: Vec<Vec<f64>> = (0..k).map(|j| trapezoid_weights(&times[..=j])).collect();
    let rings = rings_for(sym, &grid)?;
    let nv = grid.n_vpts();
    let modes: Vec<(crate::msymbol::Vec3, crate::msymbol::Vec3)> = (0..grid.len())
        .map(|idx| (grid.eta_of(idx / nv), grid.xi_of(idx % nv)))
        .collect();
    let cell = grid.cell();

    let mut dissipation = 0.0;
    let mut lapl_lhs = 0.0;
    let mut lapl_bound = Some(0.0);
    for ring in &rings {
        let mut ring_lhs = 0.0;
        let mut ring_base = 0.0;
        for (i, node) in nodes.iter().enumerate() {
            let piece = match &ring.theta {
                None => (*node).clone(),
                Some(th) => {
                    let values = node.values.iter().enumerate().map(|(q, v)| v * th[q % nv]).collect();
                    Field { grid, values, time: node.time }
                }
            };
            let norm2 = piece.l2_norm().powi(2);
            ring_base += omega[i] * norm2;
            if norm2 == 0.0 || i + 1 == k {
                continue;
            }
            let spec = spectral::forward(&piece);
            let pairs: Vec<(f64, f64)> =
                (i.max(1)..k).map(|j| (times[j] - times[i], omega[j] * nu[j][i])).collect();
            let partial: Vec<f64> = spec
                .modes
                .par_chunks(MODE_CHUNK)
                .enumerate()
                .map(|(c, chunk)| {
                    let mut acc = 0.0;
                    for (q, amp) in chunk.iter().enumerate() {
                        let a2 = amp.norm_sqr();
                        if a2 == 0.0 {
                            continue;
                        }
                        let (eta, xi) = &modes[c * MODE_CHUNK + q];
                        let xi2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
                        if xi2 == 0.0 {
                            continue;
                        }
                        let mut weight = 0.0;
                        for &(s, wgt) in &pairs {
                            let phi = phase_integral_span(s, xi, eta);
                            weight += wgt * (1.0 + ring.delta * phi).powf(-2.0 * ring.exponent_p);
                        }
                        acc += xi2 * a2 * weight;
                    }
                    acc
                })
                .collect();
            ring_lhs += partial.iter().sum::<f64>() * cell;
        }
        dissipation += ring.scale * ring_lhs;
        lapl_lhs += ring_lhs;
        lapl_bound = match (lapl_bound, ring.lapl_factor) {
            (Some(b), Some(f)) => Some(b + f * ring_base),
            _ => None,
        };
    }
    Ok(WeightedEnergy { base, dissipation, lapl_lhs, lapl_bound })
}

/// `(‖w‖²_{L²_{t,x,v}}, dissipation)` of the trajectory `w` on `[0, T₀]`.
pub fn m_weighted_energy(w: &[Field], sym: &SymbolSpec, t0: f64) -> Result<(f64, f64)> {
    let e = energy_functionals(w, sym, t0)?;
    Ok((e.base, e.dissipation))
}

/// Ring pieces `w_n = θ_n ⟨v⟩^m w`, `n = 0..=n_max`.
pub fn ring_decompose(w: &Field, part: &DyadicPartition, m: f64) -> Result<Vec<Field>> {
    if !(m > 3.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("ring weight m must exceed 3, got {m}")));
    }
    let grid = w.grid;
    let thetas = ring_weights(&grid, part)?;
    let nv = grid.n_vpts();
    let weight: Vec<f64> = (0..nv).map(|iv| japanese(&grid.v_coord(iv)).powf(m)).collect();
    Ok(thetas
        .iter()
        .map(|th| {
            let values = w.values.iter().enumerate().map(|(q, v)| v * weight[q % nv] * th[q % nv]).collect();
            Field { grid, values, time: w.time }
        })
        .collect())
}

/// Result of [`commutator_x_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub horizons: Vec<f64>,
    /// `‖M(φf) − φ Mf‖₂` per horizon.
    pub norms: Vec<f64>,
    /// `r(T) = ‖M(φf) − φ Mf‖₂ / (T ‖φ‖_{H⁵} ‖Mf‖₂)`.
    pub ratios: Vec<f64>,
    pub phi_h5: f64,
    /// Log-log slope of the norms against `T`; `None` when a norm vanishes.
    pub slope: Option<f64>,
}

/// `‖φ‖_{H⁵} = (Σ_η ⟨η⟩^{10} |φ̂_η|²)^{1/2}` with `φ̂_η` the Fourier coefficients
/// `N^{-d} Σ_x φ(x) e^{−iη·x}`.
pub fn h5_norm(grid: &PhaseGrid, phi: &[f64]) -> Result<f64> {
    if phi.len() != grid.n_xpts() {
        return Err(Error::ShapeMismatch { expected: grid.n_xpts(), got: phi.len() });
    }
    let shape = vec![grid.n_x; grid.dim_x];
    let axes: Vec<usize> = (0..grid.dim_x).collect();
    let mut data: Vec<Complex64> = phi.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft::fft_axes(&mut data, &shape, &axes, false);
    let n = grid.n_xpts() as f64;
    let s: f64 = data
        .iter()
        .enumerate()
        .map(|(ix, c)| japanese(&grid.eta_of(ix)).powi(10) * (c.norm_sqr() / (n * n)))
        .sum();
    Ok(s.sqrt())
}

/// Commutator of the multiplier `M(0, T)` with multiplication by `φ(x)`.
pub fn commutator_x_experiment(
    phi: &[f64],
    f: &Field,
    sym: &SymbolParams,
    horizons: &[f64],
) -> Result<CommutatorReport> {
    let grid = f.grid;
    let phi_h5 = h5_norm(&grid, phi)?;
    if horizons.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter("horizons must be positive".into()));
    }
    let nv = grid.n_vpts();
    let phi_f = Field {
        grid,
        values: f.values.iter().enumerate().map(|(q, v)| v * phi[q / nv]).collect(),
        time: f.time,
    };
    let spec_f = spectral::forward(f);
    let spec_pf = spectral::forward(&phi_f);
    let mut norms = Vec::with_capacity(horizons.len());
    let mut ratios = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let m = |eta: &crate::msymbol::Vec3, xi: &crate::msymbol::Vec3| {
            (1.0 + sym.delta * phase_integral_span(t, xi, eta)).powf(-sym.exponent_p)
        };
        let mf = spectral::inverse(&spectral::apply_multiplier(&spec_f, m))?;
        let m_pf = spectral::inverse(&spectral::apply_multiplier(&spec_pf, m))?;
        let diff = Field {
            grid,
            values: m_pf.values.iter().zip(&mf.values).enumerate().map(|(q, (a, b))| a - phi[q / nv] * b).collect(),
            time: f.time,
        };
        let norm = diff.l2_norm();
        let denom = t * phi_h5 * mf.l2_norm();
        norms.push(norm);
        ratios.push(if denom > 0.0 { norm / denom } else { 0.0 });
    }
    let slope = (horizons.len() >= 2 && norms.iter().all(|n| *n > 0.0))
        .then(|| quad::log_log_slope(horizons, &norms));
    Ok(CommutatorReport { horizons: horizons.to_vec(), norms, ratios, phi_h5, slope })
}

/// Mollifier gaps `ε_a` per radius.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MollifierReport {
    pub radii: Vec<f64>,
    /// `sup_x |ρ − ρ * φ_a|`.
    pub spatial: Vec<f64>,
    /// `sup |g − g * φ_a|` with `g = ⟨v⟩^{m+|β|/2} f`.
    pub phase: Vec<f64>,
}

impl MollifierReport {
    /// True when both series are non-increasing up to `tol`.
    pub fn decreasing(&self, tol: f64) -> bool {
        [&self.spatial, &self.phase].iter().all(|s| s.windows(2).all(|w| w[1] <= w[0] + tol))
    }
}

pub fn mollifier_convergence(f: &Field, radii: &[f64], m: f64, beta: f64) -> Result<MollifierReport> {
    check_radii(radii)?;
    let rho = spectral::density(f);
    let g = weighted_field(f, m + 0.5 * beta.abs());
    let sup_gap = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |s, (x, y)| s.max((x - y).abs()));
    let mut spatial = Vec::with_capacity(radii.len());
    let mut phase = Vec::with_capacity(radii.len());
    for &a in radii {
        spatial.push(sup_gap(&rho, &spectral::mollify_spatial(&f.grid, &rho, a)?));
        phase.push(sup_gap(&g.values, &spectral::mollify(&g, a, MollifierKind::Bump)?.values));
    }
    Ok(MollifierReport { radii: radii.to_vec(), spatial, phase })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    /// Matched snapshot times of the two runs.
    pub times: Vec<f64>,
    /// `‖f − g‖₂` at each matched time.
    pub distance: Vec<f64>,
    /// `‖w‖₂` at each matched time.
    pub weighted_distance: Vec<f64>,
    pub energy: WeightedEnergy,
    /// Mollifier gaps of `g(T₀)`.
    pub epsilon_a: MollifierReport,
    pub commutator: Option<CommutatorReport>,
    /// Smallest density seen in either run.
    pub rho_min: f64,
    /// `c₁ = 4^{−min(β,0)} c₀ / 8`, reported only.
    pub c1: f64,
    pub checks: Vec<Check>,
}

impl UniquenessReport {
    pub fn sup_distance(&self) -> f64 {
        self.distance.iter().fold(0.0, |m, d| m.max(*d))
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| !c.failed())
    }
}

fn run_member(grid: PhaseGrid, cfg: SolverConfig, f0: &Field) -> Result<Trajectory> {
    Solver::new(grid, cfg)?.run(f0)
}

fn bump(grid: &PhaseGrid) -> Field {
    Field::from_fn(*grid, |x, v| {
        0.5 * (1.0 + x[0].cos()) * crate::solver::maxwellian(v, &[0.0; 3], 1.0)
    })
}

/// Runs the reference solution `f` of the experiment.
pub fn base_trajectory(cfg: &ExperimentConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let f0 = cfg.initial.build(&cfg.grid)?;
    run_member(cfg.grid, cfg.base_run, &f0)
}

/// Runs the perturbed solution `g`; returns it with its grid.
fn perturbed_trajectory(cfg: &ExperimentConfig) -> Result<Trajectory> {
    let d = cfg.perturbation.magnitude;
    match cfg.perturbation.kind {
        PerturbationKind::Bump => {
            let mut g0 = cfg.initial.build(&cfg.grid)?;
            if d > 0.0 {
                let b = bump(&cfg.grid);
                for (g, bv) in g0.values.iter_mut().zip(&b.values) {
                    *g += d * bv;
                }
            }
            run_member(cfg.grid, cfg.base_run, &g0)
        }
        PerturbationKind::Resolution => {
            let grid = if d > 0.0 {
                PhaseGrid::new(cfg.grid.dim_x, 2 * cfg.grid.n_x, 2 * cfg.grid.n_v, cfg.grid.l_v)?
            } else {
                cfg.grid
            };
            let g0 = cfg.initial.build(&grid)?;
            run_member(grid, cfg.base_run, &g0)
        }
        PerturbationKind::Dt => {
            let mut run = cfg.base_run;
            if d > 0.0 {
                run.dt *= 0.5;
                run.snapshot_every *= 2;
            }
            let g0 = cfg.initial.build(&cfg.grid)?;
            run_member(cfg.grid, run, &g0)
        }
    }
}

/// Twin run: integrates `f` and `g` concurrently and assembles the report.
pub fn twin_run(cfg: &ExperimentConfig) -> Result<UniquenessReport> {
    cfg.validate()?;
    let (f, g) = rayon::join(|| base_trajectory(cfg), || perturbed_trajectory(cfg));
    assemble_report(cfg, &f?, &g?)
}

/// Twin run against a precomputed reference trajectory.
pub fn twin_run_with_base(cfg: &ExperimentConfig, base: &Trajectory) -> Result<UniquenessReport> {
    cfg.validate()?;
    let g = perturbed_trajectory(cfg)?;
    assemble_report(cfg, base, &g)
}

fn assemble_report(cfg: &ExperimentConfig, f: &Trajectory, g: &Trajectory) -> Result<UniquenessReport> {
    let grid = cfg.grid;
    let mut times = Vec::new();
    let mut distance = Vec::new();
    let mut weighted_distance = Vec::new();
    let mut w_traj = Vec::new();
    let mut g_at_t0: Option<Field> = None;
    let mut gi = 0;
    for fs in &f.snapshots {
        let tol = TIME_MATCH_TOL * (1.0 + fs.time.abs());
        while gi < g.snapshots.len() && g.snapshots[gi].time < fs.time - tol {
            gi += 1;
        }
        let Some(gs) = g.snapshots.get(gi) else { break };
        if (gs.time - fs.time).abs() > tol {
            continue;
        }
        let gs = if gs.grid == grid { gs.clone() } else { gs.subsample(grid)? };
        let mut h = fs.difference(&gs)?;
        h.time = fs.time;
        let w = weighted_field(&h, cfg.ring_m);
        times.push(fs.time);
        distance.push(h.l2_norm());
        weighted_distance.push(w.l2_norm());
        if fs.time <= cfg.t0 + TIME_MATCH_TOL * (1.0 + cfg.t0) {
            w_traj.push(w);
            g_at_t0 = Some(gs);
        }
    }
    if times.is_empty() {
        return Err(Error::Precondition("the two runs share no snapshot times".into()));
    }
    let energy = energy_functionals(&w_traj, &cfg.symbol, cfg.t0)?;
    let g_t0 = g_at_t0.unwrap_or_else(|| f.snapshots[0].clone());
    let p = cfg.base_run.params;
    let epsilon_a = mollifier_convergence(&g_t0, &cfg.mollifier_radii, cfg.ring_m, p.beta)?;
    let commutator = if cfg.commutator_horizons.is_empty() {
        None
    } else {
        let phi: Vec<f64> = (0..grid.n_xpts()).map(|ix| grid.x_coord(ix)[0].cos()).collect();
        Some(commutator_x_experiment(&phi, &g_t0, &cfg.symbol.plain()?, &cfg.commutator_horizons)?)
    };
    let rho_min = f
        .diagnostics
        .iter()
        .chain(&g.diagnostics)
        .map(|d| d.rho_min)
        .fold(f64::INFINITY, f64::min);
    let c1 = 4f64.powf(-p.beta.min(0.0)) * p.c0 / 8.0;

    let mut checks = Vec::new();
    let series_ok = distance
        .iter()
        .chain(&weighted_distance)
        .chain(&epsilon_a.spatial)
        .chain(&epsilon_a.phase)
        .chain([energy.base, energy.dissipation, energy.lapl_lhs].iter())
        .all(|v| v.is_finite() && *v >= 0.0);
    checks.push(Check::new("entries_finite_nonnegative", if series_ok { 0.0 } else { 1.0 }, 0.0, series_ok));
    if cfg.perturbation.magnitude == 0.0 {
        let sup = distance.iter().fold(0.0f64, |m, d| m.max(*d));
        checks.push(Check::new("zero_distance", sup, 0.0, sup == 0.0));
    } else {
        checks.push(Check::skipped("zero_distance", "perturbation magnitude is positive"));
    }
    match energy.lapl_bound {
        Some(b) => checks.push(Check::new("lapl_inequality", energy.lapl_lhs, b, energy.lapl_lhs <= b)),
        None => checks.push(Check::skipped("lapl_inequality", "exponent is not 1/2 + epsilon")),
    }
    if cfg.base_run.model == Model::Toy && cfg.base_run.collisions {
        let bound = 0.5 * p.c0;
        checks.push(Check::new("rho_lower_bound", rho_min, bound, rho_min >= bound));
    } else {
        checks.push(Check::skipped("rho_lower_bound", "toy model with collisions only"));
    }
    let dec = epsilon_a.decreasing(1e-14);
    checks.push(Check::new(
        "mollifier_gap_decreasing",
        *epsilon_a.spatial.last().unwrap_or(&0.0),
        f64::INFINITY,
        dec,
    ));
    if let Some(c) = &commutator {
        let rmax = c.ratios.iter().fold(0.0f64, |m, r| m.max(*r));
        checks.push(Check::new("commutator_ratio_finite", rmax, f64::INFINITY, rmax.is_finite()));
    }
    Ok(UniquenessReport {
        times,
        distance,
        weighted_distance,
        energy,
        epsilon_a,
        commutator,
        rho_min,
        c1,
        checks,
    })
}

/// Linear-response sweep over perturbation magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub magnitudes: Vec<f64>,
    pub sup_distances: Vec<f64>,
    /// Log-log slope of the sup distance against the magnitude.
    pub slope: f64,
    pub reports: Vec<UniquenessReport>,
}

/// Runs one twin per magnitude, sharing the reference run.
pub fn stability_sweep(cfg: &ExperimentConfig, magnitudes: &[f64]) -> Result<StabilityReport> {
    if magnitudes.len() < 2 || magnitudes.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidParameter("a sweep needs at least two positive magnitudes".into()));
    }
    let base = base_trajectory(cfg)?;
    let mut reports = Vec::with_capacity(magnitudes.len());
    for &d in magnitudes {
        let mut c = cfg.clone();
        c.perturbation.magnitude = d;
        reports.push(twin_run_with_base(&c, &base)?);
    }
    let sup_distances: Vec<f64> = reports.iter().map(|r| r.sup_distance()).collect();
    let slope = quad::log_log_slope(magnitudes, &sup_distances);
    Ok(StabilityReport { magnitudes: magnitudes.to_vec(), sup_distances, slope, reports })
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

/// Long-format CSV `series,key,value` of every report series and scalar.
pub fn report_csv(report: &UniquenessReport, meta: &str) -> String {
    let mut s = String::new();
    if !meta.is_empty() {
        writeln!(s, "# {meta}").ok();
    }
    s.push_str("series,key,value\n");
    for (i, t) in report.times.iter().enumerate() {
        writeln!(s, "distance,{},{}", fmt(*t), fmt(report.distance[i])).ok();
        writeln!(s, "weighted_distance,{},{}", fmt(*t), fmt(report.weighted_distance[i])).ok();
    }
    let e = &report.energy;
    writeln!(s, "energy_base,,{}", fmt(e.base)).ok();
    writeln!(s, "energy_dissipation,,{}", fmt(e.dissipation)).ok();
    writeln!(s, "lapl_lhs,,{}", fmt(e.lapl_lhs)).ok();
    if let Some(b) = e.lapl_bound {
        writeln!(s, "lapl_bound,,{}", fmt(b)).ok();
    }
    let m = &report.epsilon_a;
    for (i, a) in m.radii.iter().enumerate() {
        writeln!(s, "epsilon_spatial,{},{}", fmt(*a), fmt(m.spatial[i])).ok();
        writeln!(s, "epsilon_phase,{},{}", fmt(*a), fmt(m.phase[i])).ok();
    }
    if let Some(c) = &report.commutator {
        for (i, t) in c.horizons.iter().enumerate() {
            writeln!(s, "commutator_norm,{},{}", fmt(*t), fmt(c.norms[i])).ok();
            writeln!(s, "commutator_ratio,{},{}", fmt(*t), fmt(c.ratios[i])).ok();
        }
    }
    writeln!(s, "rho_min,,{}", fmt(report.rho_min)).ok();
    writeln!(s, "c1,,{}", fmt(report.c1)).ok();
    s
}

/// Human-readable summary with one line per check.
pub fn report_text(report: &UniquenessReport, meta: &str) -> String {
    let mut s = String::new();
    if !meta.is_empty() {
        writeln!(s, "# {meta}").ok();
    }
    writeln!(s, "twin run: {} matched snapshots", report.times.len()).ok();
    writeln!(s, "sup distance        {:.6e}", report.sup_distance()).ok();
    writeln!(s, "base energy         {:.6e}", report.energy.base).ok();
    writeln!(s, "dissipation         {:.6e}", report.energy.dissipation).ok();
    writeln!(s, "rho_min             {:.6e}", report.rho_min).ok();
    writeln!(s, "c1 (reported only)  {:.6e}", report.c1).ok();
    for c in &report.checks {
        if c.status == CheckStatus::Skipped {
            writeln!(s, "{} {} ({})", c.status.label(), c.name, c.note).ok();
        } else {
            writeln!(s, "{} {} measured={:.6e} bound={:.6e}", c.status.label(), c.name, c.measured, c.bound).ok();
        }
    }
    writeln!(s, "verdict: {}", if report.passed() { "PASS" } else { "FAIL" }).ok();
    s
}

/// Writes `report.csv` and `report.txt` into `dir`.
pub fn write_report<P: AsRef<Path>>(dir: P, report: &UniquenessReport, meta: &str) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), report_csv(report, meta))?;
    std::fs::write(dir.join("report.txt"), report_text(report, meta))?;
    Ok(())
}

/// `magnitude,sup_distance` rows followed by the fitted slope.
pub fn slope_csv(sweep: &StabilityReport, meta: &str) -> String {
    let mut s = String::new();
    if !meta.is_empty() {
        writeln!(s, "# {meta}").ok();
    }
    s.push_str("magnitude,sup_distance\n");
    for (d, v) in sweep.magnitudes.iter().zip(&sweep.sup_distances) {
        writeln!(s, "{},{}", fmt(*d), fmt(*v)).ok();
    }
    writeln!(s, "# slope {}", fmt(sweep.slope)).ok();
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landau::ModelParams;
    use crate::solver::maxwellian;
    use rand::{Rng, SeedableRng};

    fn gaussian(v: &[f64; 3]) -> f64 {
        maxwellian(v, &[0.0; 3], 1.0)
    }

    fn toy_config(grid: PhaseGrid, steps: usize) -> ExperimentConfig {
        let params = ModelParams::new(0.0, 0.0, 4.0, 6.0, 0.05, 1.0).unwrap();
        let dt = grid.dxi();
        let mut run = SolverConfig::new(&grid, Model::Toy, params, dt, steps as f64 * dt).unwrap();
        run.scheme = crate::solver::Splitting::Lie;
        ExperimentConfig {
            grid,
            base_run: run,
            initial: InitialData::PerturbedMaxwellian {
                density: 0.3,
                temperature: 1.0,
                drift: [0.0; 3],
                amplitude: 0.2,
                mode: 1,
            },
            perturbation: Perturbation { kind: PerturbationKind::Bump, magnitude: 0.0 },
            symbol: SymbolSpec::Plain(SymbolParams::new(1.0, 0.1).unwrap()),
            t0: run.t_end,
            mollifier_radii: vec![1.0, 0.5],
            ring_m: 4.0,
            commutator_horizons: vec![0.5, 1.0],
        }
    }

    #[test]
    fn trapezoid_weights_integrate_linear_functions() {
        let nodes = [0.0, 0.5, 1.5, 2.0];
        let w = trapezoid_weights(&nodes);
        let int: f64 = nodes.iter().zip(&w).map(|(t, w)| (3.0 * t + 1.0) * w).sum();
        assert!((int - 8.0).abs() < 1e-14);
        assert_eq!(trapezoid_weights(&[1.0]), vec![0.0]);
    }

    #[test]
    fn zero_trajectory_has_zero_energy() {
        let grid = PhaseGrid::new(1, 4, 4, 3.0).unwrap();
        let w: Vec<Field> = (0..4).map(|i| Field { time: i as f64 * 0.1, ..Field::zeros(grid) }).collect();
        let sym = SymbolSpec::Plain(SymbolParams::new(1.0, 0.5).unwrap());
        assert_eq!(m_weighted_energy(&w, &sym, 0.3).unwrap(), (0.0, 0.0));
        let wsym = SymbolSpec::Weighted(WeightedSymbolParams::new(1.0, 1.0, 0).unwrap());
        assert_eq!(m_weighted_energy(&w, &wsym, 0.3).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn single_mode_dissipation_matches_quadrature() {
        let grid = PhaseGrid::new(1, 8, 8, 4.0).unwrap();
        let k = 2.0 * grid.dxi();
        let (delta, eps) = (1.0, 0.5);
        let t0 = 1.0;
        let h = 0.01;
        let w: Vec<Field> = (0..=100)
            .map(|i| Field { time: i as f64 * h, ..Field::from_fn(grid, |x, v| (x[0] + k * v[0]).cos()) })
            .collect();
        let norm2 = w[0].l2_norm().powi(2);
        let sym = SymbolSpec::Plain(SymbolParams::new(delta, eps).unwrap());
        let e = energy_functionals(&w, &sym, t0).unwrap();
        // ∫₀^{T₀}∫₀^T g(T − t) dt dT = ∫₀^{T₀} (T₀ − s) g(s) ds
        let p = 0.5 + eps;
        let m2 = |s: f64| {
            let phi = s * (1.0 + k * k) - s * s * k + s * s * s / 3.0;
            (1.0 + delta * phi).powf(-2.0 * p)
        };
        let oracle = norm2 * k * k * quad::adaptive_simpson(&|s| (t0 - s) * m2(s), 0.0, t0, 1e-12);
        assert!((e.dissipation - oracle).abs() < 1e-3 * oracle, "{} vs {}", e.dissipation, oracle);
        assert!((e.base - norm2 * t0).abs() < 1e-12 * norm2);
        assert!(e.lapl_lhs <= e.lapl_bound.unwrap());
    }

    #[test]
    fn lapl_inequality_on_random_smooth_trajectories() {
        let grid = PhaseGrid::new(1, 8, 8, 4.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let a: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let w: Vec<Field> = (0..=20)
                .map(|i| {
                    let t = i as f64 * grid.dxi() / 4.0;
                    let f = Field::from_fn(grid, |x, v| {
                        (a[0] + a[1] * (x[0] - t * v[0]).cos() + a[2] * (x[0] * 2.0).sin()) * gaussian(v)
                            * (1.0 + a[3] * v[1])
                    });
                    Field { time: t, ..f }
                })
                .collect();
            for (d, e) in [(1.0, 0.1), (0.3, 0.5), (5.0, 0.25)] {
                let sym = SymbolSpec::Plain(SymbolParams::new(d, e).unwrap());
                let en = energy_functionals(&w, &sym, w.last().unwrap().time).unwrap();
                assert!(en.lapl_lhs <= en.lapl_bound.unwrap(), "{en:?}");
            }
            let ws = SymbolSpec::Weighted(WeightedSymbolParams::new(1.0, 1.0, 0).unwrap());
            let en = energy_functionals(&w, &ws, 1.0).unwrap();
            assert!(en.lapl_lhs <= en.lapl_bound.unwrap());
            assert!(en.dissipation >= en.lapl_lhs);
        }
    }

    #[test]
    fn lapl_bound_needs_canonical_exponent() {
        let grid = PhaseGrid::new(1, 4, 4, 3.0).unwrap();
        let w = vec![Field::from_fn(grid, |_, v| gaussian(v)), Field { time: 0.5, ..Field::from_fn(grid, |_, v| gaussian(v)) }];
        let sym = SymbolSpec::Plain(SymbolParams::with_exponent(1.0, 0.1, 0.9).unwrap());
        assert!(energy_functionals(&w, &sym, 0.5).unwrap().lapl_bound.is_none());
    }

    #[test]
    fn ring_decomposition_identities() {
        let grid = PhaseGrid::new(1, 4, 16, 8.0).unwrap();
        let part = DyadicPartition::for_velocity_box(grid.l_v).unwrap();
        let w = Field::from_fn(grid, |x, v| (1.0 + 0.5 * x[0].sin()) * (-0.1 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).exp());
        let m = 4.5;
        let pieces = ring_decompose(&w, &part, m).unwrap();
        let target = weighted_field(&w, m);
        let mut sum = vec![0.0; grid.len()];
        for p in &pieces {
            for (s, v) in sum.iter_mut().zip(&p.values) {
                *s += v;
            }
        }
        let scale = target.lp_norm(f64::INFINITY);
        let err = sum.iter().zip(&target.values).fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
        assert!(err < 1e-12 * scale, "{err}");
        let sq: f64 = pieces.iter().map(|p| p.l2_norm().powi(2)).sum();
        assert!(sq >= target.l2_norm().powi(2) / 3.0);

        let inner = Field::from_fn(grid, |_, v| {
            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if r < 3.0 { 1.0 } else { 0.0 }
        });
        let pieces = ring_decompose(&inner, &part, m).unwrap();
        for (n, p) in pieces.iter().enumerate() {
            if n >= 2 {
                assert!(p.values.iter().all(|v| *v == 0.0), "ring {n} nonzero");
            }
        }
        assert!(pieces[0].l2_norm() > 0.0);
        assert!(ring_decompose(&w, &part, 3.0).is_err());
    }

    #[test]
    fn commutator_examples() {
        let grid = PhaseGrid::new(1, 8, 8, 4.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let vals = (0..grid.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let f = Field::from_values(grid, vals, 0.0).unwrap();
        let sym = SymbolParams::new(1.0, 0.1).unwrap();
        let constant = vec![2.0; grid.n_xpts()];
        let r = commutator_x_experiment(&constant, &f, &sym, &[0.5, 1.0]).unwrap();
        assert!(r.norms.iter().all(|n| *n < 1e-14 * f.l2_norm()));
        let phi: Vec<f64> = (0..grid.n_xpts()).map(|ix| grid.x_coord(ix)[0].cos()).collect();
        assert!((h5_norm(&grid, &phi).unwrap() - (2.0f64.powi(5) * 0.5).sqrt()).abs() < 1e-12);
        let ts = [1e-1, 1e-2, 1e-3, 1e-4];
        let r = commutator_x_experiment(&phi, &f, &sym, &ts).unwrap();
        assert!(r.norms.windows(2).all(|w| w[1] < w[0]));
        assert!(r.norms[3] < 1e-3 * r.norms[0]);
        assert!(commutator_x_experiment(&phi, &f, &sym, &[0.0]).is_err());
    }

    #[test]
    fn mollifier_convergence_examples() {
        let grid = PhaseGrid::new(1, 64, 8, 4.0).unwrap();
        let c = Field::from_fn(grid, |_, _| 0.7);
        let r = mollifier_convergence(&c, &[1.0, 0.5], 4.0, 0.0).unwrap();
        let rho_c = 0.7 * (2.0 * grid.l_v).powi(3);
        assert!(r.spatial.iter().all(|e| *e < 1e-14 * rho_c));
        let smooth = Field::from_fn(grid, |x, v| (1.0 + 0.2 * x[0].sin()) * gaussian(v));
        let radii = [1.0, 0.5, 0.25, 0.15];
        let r = mollifier_convergence(&smooth, &radii, 4.0, 1.0).unwrap();
        assert!(r.decreasing(1e-14));
        assert!(*r.spatial.last().unwrap() < 1e-3, "{:?}", r.spatial);
        // ρ = L|sin x|/L' is Lipschitz with constant L
        let l = 0.3;
        let lip = Field::from_fn(grid, |x, _| l * x[0].sin().abs() / grid.cell_v() / 512.0);
        let rho_l = l;
        let r = mollifier_convergence(&lip, &radii, 4.0, 0.0).unwrap();
        for (a, e) in radii.iter().zip(&r.spatial) {
            assert!(*e <= rho_l * a + 1e-12, "a={a} e={e}");
        }
        assert!(mollifier_convergence(&smooth, &[0.5, 1.0], 4.0, 0.0).is_err());
    }

    #[test]
    fn config_invariants() {
        let grid = PhaseGrid::new(1, 8, 8, 7.0).unwrap();
        let cfg = toy_config(grid, 4);
        cfg.validate().unwrap();
        let mut c = cfg.clone();
        c.perturbation.magnitude = -1.0;
        assert!(c.validate().is_err());
        let mut c = cfg.clone();
        c.t0 = cfg.base_run.t_end * 2.0;
        assert!(c.validate().is_err());
        let mut c = cfg.clone();
        c.ring_m = 3.0;
        assert!(c.validate().is_err());
        let mut c = cfg.clone();
        c.ring_m = 9.5;
        c.base_run.params.beta = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg.clone();
        c.mollifier_radii = vec![0.5, 0.5];
        assert!(c.validate().is_err());
        let mut c = cfg;
        c.perturbation = Perturbation { kind: PerturbationKind::Dt, magnitude: 1.0 };
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_perturbation_twin_is_exact_and_deterministic() {
        let grid = PhaseGrid::new(1, 8, 8, 7.0).unwrap();
        let cfg = toy_config(grid, 4);
        let a = twin_run(&cfg).unwrap();
        assert_eq!(a.times.len(), 5);
        assert!(a.distance.iter().all(|d| *d == 0.0));
        assert!(a.passed(), "{:?}", a.checks);
        let b = twin_run(&cfg).unwrap();
        assert_eq!(report_csv(&a, "x"), report_csv(&b, "x"));
        assert_eq!(a, b);
    }

    #[test]
    fn perturbation_variants_run() {
        let grid = PhaseGrid::new(1, 8, 8, 7.0).unwrap();
        let mut cfg = toy_config(grid, 2);
        cfg.perturbation = Perturbation { kind: PerturbationKind::Bump, magnitude: 1e-3 };
        let r = twin_run(&cfg).unwrap();
        assert!(r.sup_distance() > 0.0 && r.passed(), "{:?}", r.checks);
        cfg.perturbation = Perturbation { kind: PerturbationKind::Resolution, magnitude: 1.0 };
        let r = twin_run(&cfg).unwrap();
        assert_eq!(r.times.len(), 3);
        assert!(r.sup_distance() > 0.0);
        cfg.base_run.dt = 2.0 * grid.dxi();
        cfg.base_run.t_end = 2.0 * cfg.base_run.dt;
        cfg.t0 = cfg.base_run.t_end;
        cfg.perturbation = Perturbation { kind: PerturbationKind::Dt, magnitude: 1.0 };
        let r = twin_run(&cfg).unwrap();
        assert_eq!(r.times.len(), 3);
        assert!(r.sup_distance() > 0.0);
    }
}
