//! Split-step time integration of the toy model and the viscous Landau
//! equation.
//!
//! A step combines the exact free-streaming shear with an explicit collision
//! substep. The collision substep is sub-cycled SSP-RK3 on the pseudo-spectral
//! right-hand side with a step chosen from the spectral radius of the velocity
//! operator. In the toy model the density is frozen during the collision
//! substep; the collision term is in divergence form in `v`, so `ρ(x)` does
//! not change there and freezing it is exact.

use crate::error::{Error, Result};
use crate::landau::{LandauOperator, ModelParams};
use crate::spectral::{self, japanese, Field, PhaseGrid};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

/// Stability interval of SSP-RK3 on the negative real axis, rounded down.
const RK3_REAL_STABILITY: f64 = 2.5;
/// Stability interval of SSP-RK3 on the imaginary axis.
const RK3_IMAG_STABILITY: f64 = 1.732;
/// Single-step L² growth factor that aborts a run.
pub const INSTABILITY_GROWTH: f64 = 10.0;
/// Tolerance of the positivity monitor.
pub const POSITIVITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Toy,
    Landau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    /// Transport over `dt`, then collisions over `dt`.
    Lie,
    /// Collisions over `dt/2`, transport over `dt`, collisions over `dt/2`.
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monitors {
    pub positivity: bool,
    pub rho_lower_bound: bool,
    pub weighted_sup: bool,
}

impl Default for Monitors {
    fn default() -> Self {
        Self { positivity: true, rho_lower_bound: true, weighted_sup: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub model: Model,
    pub params: ModelParams,
    /// Step; must be an integer multiple of the grid's `dxi`.
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Splitting,
    /// Fraction of the stability limit used by the collision sub-steps, in (0, 1].
    pub cfl_safety: f64,
    /// When false the collision substep is skipped and only free streaming runs.
    pub collisions: bool,
    pub monitors: Monitors,
    /// Keep a snapshot every this many steps (0 keeps only the initial and final states).
    pub snapshot_every: usize,
}

impl SolverConfig {
    pub fn new(grid: &PhaseGrid, model: Model, params: ModelParams, dt: f64, t_end: f64) -> Result<Self> {
        let cfg = Self {
            model,
            params,
            dt,
            t_end,
            scheme: Splitting::Strang,
            cfl_safety: 0.9,
            collisions: true,
            monitors: Monitors::default(),
            snapshot_every: 1,
        };
        cfg.validate(grid)?;
        Ok(cfg)
    }

    /// Checks the invariants against a grid. Free streaming is exact on aligned
    /// steps, so alignment is the only step-size constraint of the transport part.
    pub fn validate(&self, grid: &PhaseGrid) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end must be ≥ 0, got {}", self.t_end)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        spectral::aligned_steps(grid, self.dt)?;
        self.params.validate()
    }

    /// Number of steps needed to reach `t_end`; the last step is never shortened.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub time: f64,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    pub min_f: f64,
    pub rho_min: f64,
    /// `max ⟨v⟩^{k₀}|f|`.
    pub weighted_sup: f64,
}

impl StepDiagnostics {
    pub fn measure(f: &Field, k0: f64) -> Self {
        let m = spectral::moments(f);
        let rho = spectral::density(f);
        Self {
            time: f.time,
            mass: m.mass,
            momentum: m.momentum,
            energy: m.energy,
            min_f: f.min(),
            rho_min: rho.iter().copied().fold(f64::INFINITY, f64::min),
            weighted_sup: spectral::weighted_sup_norm(f, k0),
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.time, self.mass, self.energy, self.min_f, self.rho_min, self.weighted_sup]
            .iter()
            .chain(&self.momentum)
            .all(|v| v.is_finite())
    }

    pub const CSV_HEADER: &'static str = "t,mass,px,py,pz,energy,min_f,rho_min,wsup_k0";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.time,
            self.mass,
            self.momentum[0],
            self.momentum[1],
            self.momentum[2],
            self.energy,
            self.min_f,
            self.rho_min,
            self.weighted_sup
        )
    }
}

/// Events raised by the monitors during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MonitorEvents {
    /// First time with `min f < −1e−10`.
    pub positivity_violation: Option<f64>,
    /// First time with `min ρ < c₀/2`.
    pub rho_violation: Option<f64>,
    /// Largest ratio of the shell-weighted sup to the interior-weighted sup.
    pub max_shell_ratio: f64,
    /// Steps whose collision substep was skipped because `ρ ≡ 0`.
    pub degenerate_steps: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub diagnostics: Vec<StepDiagnostics>,
    pub snapshots: Vec<Field>,
    pub events: MonitorEvents,
    pub final_state: Field,
}

/// One named check of [`validate_initial`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialReport {
    pub checks: Vec<InitialCheck>,
}

impl InitialReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&InitialCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }
}

/// Largest admissible ratio between the weighted sup on the outermost
/// velocity layer and the weighted sup over the box; a profile whose
/// `⟨v⟩^{k₀}`-weighted maximum sits at the box edge has no finite weighted
/// norm in the unbounded domain.
pub const SHELL_RATIO_BOUND: f64 = 1e-2;

/// Checks the initial-data conditions of the model.
///
/// Both models check positivity and `⟨v⟩^{k₀}` decay. The toy model adds
/// `sup f ≤ m₀` and `ρ > c₀`; the Landau model adds the smallness condition
/// `sup_x ‖⟨v⟩^m f‖_{L⁴_v ∩ L¹_v} ≤ c₀`.
pub fn validate_initial(f0: &Field, params: &ModelParams, model: Model) -> InitialReport {
    let mut checks = Vec::new();
    let mut push = |name: &str, measured: f64, bound: f64, pass: bool| {
        checks.push(InitialCheck { name: name.into(), measured, bound, pass: pass && measured.is_finite() })
    };
    let finite = f0.is_finite();
    push("finite", if finite { 0.0 } else { 1.0 }, 0.0, finite);
    let min_f = f0.min();
    push("positivity", min_f, 0.0, min_f >= 0.0);
    let wsup = spectral::weighted_sup_norm(f0, params.k0);
    let shell = spectral::shell_weighted_sup(f0, params.k0);
    let ratio = if wsup > 0.0 { shell / wsup } else { 0.0 };
    push("weighted_decay_k0", ratio, SHELL_RATIO_BOUND, ratio <= SHELL_RATIO_BOUND);
    push("weighted_sup_k0", wsup, f64::INFINITY, wsup.is_finite());
    match model {
        Model::Toy => {
            let max_f = f0.max();
            push("sup_bound_m0", max_f, params.m0, max_f <= params.m0);
            let rho_min = spectral::density(f0).iter().copied().fold(f64::INFINITY, f64::min);
            push("rho_lower_c0", rho_min, params.c0, rho_min > params.c0);
        }
        Model::Landau => {
            let s = landau_smallness(f0, params.m);
            push("smallness_c0", s, params.c0, s <= params.c0);
        }
    }
    InitialReport { checks }
}

/// `sup_x max(‖⟨v⟩^m f‖_{L⁴_v}, ‖⟨v⟩^m f‖_{L¹_v})`.
pub fn landau_smallness(f: &Field, m: f64) -> f64 {
    let grid = f.grid;
    let nv = grid.n_vpts();
    let cv = grid.cell_v();
    let w: Vec<f64> = (0..nv).map(|iv| japanese(&grid.v_coord(iv)).powf(m)).collect();
    (0..grid.n_xpts())
        .map(|ix| {
            let (mut l1, mut l4) = (0.0, 0.0);
            for (v, wt) in f.x_slice(ix).iter().zip(&w) {
                let g = (v * wt).abs();
                l1 += g;
                l4 += g.powi(4);
            }
            (l1 * cv).max((l4 * cv).powf(0.25))
        })
        .fold(0.0, f64::max)
}

/// Owns the collision operator of a grid and advances states.
pub struct Solver {
    op: LandauOperator,
    cfg: SolverConfig,
    /// Test hook: fixed sub-step count, bypassing the stability limit.
    forced_substeps: Option<usize>,
}

impl Solver {
    pub fn new(grid: PhaseGrid, cfg: SolverConfig) -> Result<Self> {
        cfg.validate(&grid)?;
        let op = match cfg.model {
            Model::Landau if cfg.collisions => LandauOperator::new(grid)?,
            _ => LandauOperator::toy_only(grid),
        };
        Ok(Self { op, cfg, forced_substeps: None })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &PhaseGrid {
        self.op.grid()
    }

    /// Largest stable collision sub-step for the state `f`.
    pub fn collision_step_limit(&self, f: &Field) -> f64 {
        let grid = self.op.grid();
        let kmax = std::f64::consts::PI / grid.dv();
        let lambda_diff = 3.0 * kmax * kmax;
        let p = &self.cfg.params;
        let (diff, drift) = match self.cfg.model {
            Model::Toy => {
                let rho_max = spectral::density(f).iter().fold(0.0f64, |m, r| m.max(r.abs()));
                // ⟨v⟩^β peaks at the box corner for β ≥ 0 and at v = 0 otherwise
                let weight_max = japanese(&[grid.l_v; 3]).powf(p.beta).max(1.0);
                (rho_max * weight_max, 0.0)
            }
            Model::Landau => {
                let (a_max, g_max) = self.op.coefficient_bounds(f);
                (a_max + p.nu, g_max)
            }
        };
        let inv_diff = diff * lambda_diff / RK3_REAL_STABILITY;
        let inv_drift = drift * 3f64.sqrt() * kmax / RK3_IMAG_STABILITY;
        let inv = inv_diff + inv_drift;
        if inv > 0.0 {
            self.cfg.cfl_safety / inv
        } else {
            f64::INFINITY
        }
    }

    fn rhs(&self, f: &Field, rho: Option<&[f64]>) -> Result<Field> {
        match self.cfg.model {
            Model::Toy => self.op.toy_rhs_with_density(f, rho.expect("toy density"), self.cfg.params.beta),
            Model::Landau => self.op.landau_rhs(f, &self.cfg.params),
        }
    }

    /// Collision substep over `tau`, sub-cycled SSP-RK3. Returns the number of
    /// sub-steps (0 when the substep was degenerate).
    pub fn collide(&self, f: &mut Field, tau: f64) -> Result<usize> {
        if tau <= 0.0 {
            return Ok(0);
        }
        let rho = match self.cfg.model {
            Model::Toy => {
                let r = spectral::density(f);
                if r.iter().all(|v| *v == 0.0) {
                    return Ok(0);
                }
                Some(r)
            }
            Model::Landau => None,
        };
        let n_sub = match self.forced_substeps {
            Some(n) => n.max(1),
            None => {
                let limit = self.collision_step_limit(f);
                if !limit.is_finite() {
                    return Ok(0);
                }
                (tau / limit).ceil().max(1.0) as usize
            }
        };
        let h = tau / n_sub as f64;
        let t0 = f.time;
        for _ in 0..n_sub {
            let u0 = f.values.clone();
            let l0 = self.rhs(f, rho.as_deref())?;
            let u1: Vec<f64> = u0.iter().zip(&l0.values).map(|(u, l)| u + h * l).collect();
            let f1 = Field::from_values(f.grid, u1, f.time)?;
            let l1 = self.rhs(&f1, rho.as_deref())?;
            let u2: Vec<f64> = u0
                .iter()
                .zip(&f1.values)
                .zip(&l1.values)
                .map(|((u, v), l)| 0.75 * u + 0.25 * (v + h * l))
                .collect();
            let f2 = Field::from_values(f.grid, u2, f.time)?;
            let l2 = self.rhs(&f2, rho.as_deref())?;
            f.values = u0
                .iter()
                .zip(&f2.values)
                .zip(&l2.values)
                .map(|((u, v), l)| u / 3.0 + 2.0 / 3.0 * (v + h * l))
                .collect();
        }
        f.time = t0;
        Ok(n_sub)
    }

    /// One full split step.
    pub fn step(&self, state: &Field) -> Result<(Field, StepDiagnostics)> {
        if !state.is_finite() {
            return Err(Error::Precondition("state contains non-finite values".into()));
        }
        if state.grid != *self.op.grid() {
            return Err(Error::ShapeMismatch { expected: self.op.grid().len(), got: state.grid.len() });
        }
        let dt = self.cfg.dt;
        let before = state.l2_norm();
        let mut f = state.clone();
        let on = self.cfg.collisions;
        match self.cfg.scheme {
            Splitting::Lie => {
                f = spectral::transport_shear(&f, dt)?;
                if on {
                    self.collide(&mut f, dt)?;
                }
            }
            Splitting::Strang => {
                if on {
                    self.collide(&mut f, 0.5 * dt)?;
                }
                f = spectral::transport_shear(&f, dt)?;
                if on {
                    self.collide(&mut f, 0.5 * dt)?;
                }
            }
        }
        let after = f.l2_norm();
        let growth = if before > 0.0 { after / before } else if after > 0.0 { f64::INFINITY } else { 1.0 };
        if !f.is_finite() || growth > INSTABILITY_GROWTH {
            return Err(Error::Instability { time: f.time, growth });
        }
        let diag = StepDiagnostics::measure(&f, self.cfg.params.k0);
        Ok((f, diag))
    }

    /// Runs from `initial` to `t_end`.
    pub fn run(&self, initial: &Field) -> Result<Trajectory> {
        if self.cfg.model == Model::Toy && self.cfg.collisions {
            let report = validate_initial(initial, &self.cfg.params, Model::Toy);
            if !report.passed() {
                return Err(Error::InitialData(format!("failed checks: {}", report.failures().join(", "))));
            }
        } else if !initial.is_finite() {
            return Err(Error::InitialData("non-finite initial data".into()));
        }
        let k0 = self.cfg.params.k0;
        let mut f = initial.clone();
        let mut diagnostics = vec![StepDiagnostics::measure(&f, k0)];
        let mut snapshots = vec![f.clone()];
        let mut events = MonitorEvents::default();
        self.monitor(&f, &diagnostics[0], &mut events);
        let n = self.cfg.n_steps();
        for s in 1..=n {
            if self.cfg.model == Model::Toy
                && self.cfg.collisions
                && spectral::density(&f).iter().all(|r| *r == 0.0)
            {
                events.degenerate_steps += 1;
            }
            let (g, d) = self.step(&f)?;
            f = g;
            self.monitor(&f, &d, &mut events);
            diagnostics.push(d);
            if self.cfg.snapshot_every > 0 && s % self.cfg.snapshot_every == 0 && s != n {
                snapshots.push(f.clone());
            }
            log::debug!("step {s}/{n} t={:.4} mass={:.12e}", d.time, d.mass);
        }
        if n > 0 {
            snapshots.push(f.clone());
        }
        Ok(Trajectory { diagnostics, snapshots, events, final_state: f })
    }

    fn monitor(&self, f: &Field, d: &StepDiagnostics, ev: &mut MonitorEvents) {
        let m = &self.cfg.monitors;
        if m.positivity && d.min_f < -POSITIVITY_TOLERANCE && ev.positivity_violation.is_none() {
            log::warn!("positivity violated at t={}: min f = {:.3e}", d.time, d.min_f);
            ev.positivity_violation = Some(d.time);
        }
        if m.rho_lower_bound && d.rho_min < 0.5 * self.cfg.params.c0 && ev.rho_violation.is_none() {
            log::warn!("density lower bound c0/2 violated at t={}", d.time);
            ev.rho_violation = Some(d.time);
        }
        if m.weighted_sup && d.weighted_sup > 0.0 {
            let r = spectral::shell_weighted_sup(f, self.cfg.params.k0) / d.weighted_sup;
            ev.max_shell_ratio = ev.max_shell_ratio.max(r);
        }
    }
}

/// Built-in initial-data families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// `ρ M_T(v − u)`, uniform in `x`.
    Maxwellian {
        #[serde(default = "one")]
        density: f64,
        #[serde(default = "one")]
        temperature: f64,
        #[serde(default)]
        drift: [f64; 3],
    },
    /// `ρ (1 + A cos(k x₁)) M_T(v − u)`.
    PerturbedMaxwellian {
        #[serde(default = "one")]
        density: f64,
        #[serde(default = "one")]
        temperature: f64,
        #[serde(default)]
        drift: [f64; 3],
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "one_u32")]
        mode: u32,
    },
    /// `ρ (1 + A cos(k x₁)) (M_T(v − u e₁) + M_T(v + u e₁)) / 2`.
    TwoBump {
        #[serde(default = "one")]
        density: f64,
        #[serde(default = "one")]
        temperature: f64,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default)]
        amplitude: f64,
        #[serde(default = "one_u32")]
        mode: u32,
    },
    /// An MKIN1 snapshot on exactly the run grid.
    Snapshot { path: std::path::PathBuf },
}

fn one() -> f64 {
    1.0
}
fn one_u32() -> u32 {
    1
}
fn default_amplitude() -> f64 {
    0.1
}
fn default_separation() -> f64 {
    1.5
}

/// Maxwellian density of unit mass, temperature `t`, centred at `u`.
pub fn maxwellian(v: &[f64; 3], u: &[f64; 3], t: f64) -> f64 {
    let r2: f64 = (0..3).map(|i| (v[i] - u[i]) * (v[i] - u[i])).sum();
    (-r2 / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).powf(1.5)
}

impl InitialData {
    /// Samples the family on `grid` (or loads the snapshot).
    pub fn build(&self, grid: &PhaseGrid) -> Result<Field> {
        let check = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            InitialData::Maxwellian { density, temperature, drift } => {
                check("density", *density)?;
                check("temperature", *temperature)?;
                Ok(Field::from_fn(*grid, |_, v| density * maxwellian(v, drift, *temperature)))
            }
            InitialData::PerturbedMaxwellian { density, temperature, drift, amplitude, mode } => {
                check("density", *density)?;
                check("temperature", *temperature)?;
                let k = *mode as f64;
                Ok(Field::from_fn(*grid, |x, v| {
                    density * (1.0 + amplitude * (k * x[0]).cos()) * maxwellian(v, drift, *temperature)
                }))
            }
            InitialData::TwoBump { density, temperature, separation, amplitude, mode } => {
                check("density", *density)?;
                check("temperature", *temperature)?;
                let k = *mode as f64;
                let (up, um) = ([*separation, 0.0, 0.0], [-*separation, 0.0, 0.0]);
                Ok(Field::from_fn(*grid, |x, v| {
                    0.5 * density
                        * (1.0 + amplitude * (k * x[0]).cos())
                        * (maxwellian(v, &up, *temperature) + maxwellian(v, &um, *temperature))
                }))
            }
            InitialData::Snapshot { path } => {
                let f = spectral::read_snapshot(path)?;
                if f.grid != *grid {
                    return Err(Error::InvalidParameter(format!(
                        "snapshot {} has grid {:?}, run grid is {:?}",
                        path.display(),
                        f.grid,
                        grid
                    )));
                }
                Ok(f)
            }
        }
    }
}

/// Writes `diagnostics.csv` and one MKIN1 snapshot per kept state into `dir`.
/// `meta` is written as a `#` comment line in the CSV and as the snapshot trailer.
pub fn write_trajectory<P: AsRef<Path>>(dir: P, traj: &Trajectory, meta: &str) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut csv = String::new();
    if !meta.is_empty() {
        writeln!(csv, "# {meta}").ok();
    }
    writeln!(csv, "{}", StepDiagnostics::CSV_HEADER).ok();
    for d in &traj.diagnostics {
        writeln!(csv, "{}", d.csv_row()).ok();
    }
    let mut file = std::fs::File::create(dir.join("diagnostics.csv"))?;
    file.write_all(csv.as_bytes())?;
    for (i, snap) in traj.snapshots.iter().enumerate() {
        spectral::write_snapshot_with_meta(dir.join(format!("snapshot_{i:05}.mkin")), snap, meta)?;
    }
    Ok(())
}

/// Largest relative deviation of `series` from its first entry.
pub fn relative_drift(series: impl IntoIterator<Item = f64>) -> f64 {
    let mut it = series.into_iter();
    let Some(first) = it.next() else { return 0.0 };
    let scale = first.abs().max(f64::MIN_POSITIVE);
    it.fold(0.0, |m, v| m.max((v - first).abs() / scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn maxwellian(v: &[f64; 3], var: f64) -> f64 {
        (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / (2.0 * var)).exp() / (2.0 * PI * var).powf(1.5)
    }

    fn toy_params(c0: f64) -> ModelParams {
        ModelParams { nu: 0.0, beta: 0.0, m: 4.0, k0: 10.0, c0, m0: 1.0 }
    }

    #[test]
    fn config_rejects_bad_input() {
        let g = PhaseGrid::new(1, 4, 8, 4.0).unwrap();
        let p = toy_params(0.01);
        assert!(SolverConfig::new(&g, Model::Toy, p, 0.0, 1.0).is_err());
        assert!(matches!(
            SolverConfig::new(&g, Model::Toy, p, 0.3, 1.0),
            Err(Error::UnalignedStep { .. })
        ));
        let mut c = SolverConfig::new(&g, Model::Toy, p, g.dxi(), 1.0).unwrap();
        c.cfl_safety = 1.5;
        assert!(c.validate(&g).is_err());
        assert_eq!(SolverConfig::new(&g, Model::Toy, p, g.dxi(), 10.0 * g.dxi()).unwrap().n_steps(), 10);
    }

    #[test]
    fn validate_initial_examples() {
        let g = PhaseGrid::new(1, 8, 16, 8.0).unwrap();
        let p = toy_params(0.01);
        let good = Field::from_fn(g, |x, v| (1.0 + 0.1 * x[0].cos()) * maxwellian(v, 1.0));
        let r = validate_initial(&good, &p, Model::Toy);
        assert!(r.passed(), "{r:?}");
        assert!(r.check("rho_lower_c0").unwrap().measured > 0.8);

        let lobe = Field::from_fn(g, |x, v| {
            maxwellian(v, 1.0) - 0.2 * maxwellian(&[v[0] - 2.0, v[1], v[2]], 0.25) * (1.0 + 0.0 * x[0])
        });
        let r = validate_initial(&lobe, &p, Model::Toy);
        assert!(!r.check("positivity").unwrap().pass);

        let heavy = Field::from_fn(g, |_, v| 0.1 * japanese(v).powi(-4));
        let r = validate_initial(&heavy, &p, Model::Toy);
        assert!(!r.check("weighted_decay_k0").unwrap().pass);
        assert!(r.check("positivity").unwrap().pass);
    }

    #[test]
    fn transport_only_step_preserves_norms() {
        let g = PhaseGrid::new(1, 16, 8, 4.0).unwrap();
        let f = Field::from_fn(g, |x, v| (1.0 + 0.5 * (x[0] + v[1]).sin()) * maxwellian(v, 1.0));
        let mut c = SolverConfig::new(&g, Model::Toy, toy_params(0.01), 3.0 * g.dxi(), 1.0).unwrap();
        c.collisions = false;
        let s = Solver::new(g, c).unwrap();
        let (h, _) = s.step(&f).unwrap();
        for p in [1.0, 2.0, 4.0] {
            let (a, b) = (f.lp_norm(p), h.lp_norm(p));
            assert!((a - b).abs() < 1e-12 * a, "p={p}: {a} vs {b}");
        }
        assert!((h.time - 3.0 * g.dxi()).abs() < 1e-15);
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = PhaseGrid::new(1, 4, 8, 4.0).unwrap();
        let c = SolverConfig::new(&g, Model::Landau, toy_params(0.01), g.dxi(), 3.0 * g.dxi()).unwrap();
        let s = Solver::new(g, c).unwrap();
        let t = s.run(&Field::zeros(g)).unwrap();
        assert_eq!(t.diagnostics.len(), 4);
        assert!(t.final_state.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn toy_heat_variance_law() {
        // uniform Maxwellian, β = 0: ∂_t f = ρΔf, so every axis variance grows by 2ρt
        let g = PhaseGrid::new(1, 4, 32, 8.0).unwrap();
        let rho = 0.02;
        let f0 = Field::from_fn(g, |_, v| rho * maxwellian(v, 1.0));
        let mut c = SolverConfig::new(&g, Model::Toy, toy_params(0.01), g.dxi(), 100.0 * g.dxi()).unwrap();
        c.snapshot_every = 0;
        let s = Solver::new(g, c).unwrap();
        let t = s.run(&f0).unwrap();
        for d in &t.diagnostics {
            let var = d.energy / (3.0 * d.mass);
            let exact = 1.0 + 2.0 * rho * d.time;
            assert!((var - exact).abs() < 1e-4 * exact, "t={} var={var} exact={exact}", d.time);
        }
        assert!(relative_drift(t.diagnostics.iter().map(|d| d.mass)) < 1e-12);
    }

    #[test]
    fn instability_is_detected() {
        let g = PhaseGrid::new(1, 4, 16, 6.0).unwrap();
        let f0 = Field::from_fn(g, |x, v| (1.0 + 0.1 * x[0].cos()) * maxwellian(v, 0.5));
        let c = SolverConfig::new(&g, Model::Toy, toy_params(0.01), 8.0 * g.dxi(), 80.0 * g.dxi()).unwrap();
        let mut s = Solver::new(g, c).unwrap();
        let stable = s.run(&f0).unwrap();
        assert!(stable.final_state.is_finite());
        assert!(stable.events.positivity_violation.is_none());
        s.forced_substeps = Some(1);
        assert!(matches!(s.run(&f0), Err(Error::Instability { .. })));
    }
}
