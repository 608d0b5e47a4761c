//! TOML run configuration.
//!
//! One file fully determines a run. Every section except `[grid]` has
//! defaults; `[symbol]` is mandatory for `twin`.

use mkin_core::harness::{ExperimentConfig, Perturbation, PerturbationKind, SymbolSpec};
use mkin_core::landau::ModelParams;
use mkin_core::msymbol::{SymbolParams, WeightedSymbolParams};
use mkin_core::solver::{InitialData, Model, Monitors, SolverConfig, Splitting};
use mkin_core::spectral::PhaseGrid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default = "default_initial")]
    pub initial: InitialData,
    pub symbol: Option<SymbolSection>,
    pub experiment: Option<ExperimentSection>,
    #[serde(default)]
    pub verify: VerifySection,
}

fn default_initial() -> InitialData {
    InitialData::PerturbedMaxwellian {
        density: 0.3,
        temperature: 1.0,
        drift: [0.0; 3],
        amplitude: 0.2,
        mode: 1,
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "one_usize")]
    pub dim_x: usize,
    pub n_x: usize,
    pub n_v: usize,
    pub l_v: f64,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Model used by `twin`; `solve-toy` and `solve-landau` override it.
    pub kind: Model,
    pub nu: f64,
    pub beta: f64,
    pub m: f64,
    pub k0: f64,
    pub c0: f64,
    pub m0: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = ModelParams::default();
        Self { kind: Model::Toy, nu: p.nu, beta: p.beta, m: p.m, k0: p.k0, c0: p.c0, m0: p.m0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Step as a multiple of the velocity dual spacing `π/l_v`.
    pub dt_cells: u32,
    pub steps: usize,
    pub scheme: Splitting,
    pub cfl_safety: f64,
    pub snapshot_every: usize,
    /// Skip the collision substep (free streaming only).
    pub transport_only: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            dt_cells: 1,
            steps: 20,
            scheme: Splitting::Strang,
            cfl_safety: 0.9,
            snapshot_every: 1,
            transport_only: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSection {
    pub delta: f64,
    pub epsilon: f64,
    /// Defaults to `1/2 + epsilon`.
    pub exponent_p: Option<f64>,
    /// Use the ring-weighted symbol `M_n` with the model's `beta` (exponent 1 by default).
    #[serde(default)]
    pub weighted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_kind")]
    pub perturbation: PerturbationKind,
    #[serde(default)]
    pub magnitude: f64,
    /// Defaults to the end of the run.
    pub t0: Option<f64>,
    #[serde(default = "default_radii")]
    pub mollifier_radii: Vec<f64>,
    #[serde(default = "default_ring_m")]
    pub ring_m: f64,
    #[serde(default)]
    pub commutator_horizons: Vec<f64>,
    /// Magnitudes of a stability sweep; when present `twin` also writes `slope.csv`.
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default = "default_slope_tol")]
    pub slope_tolerance: f64,
}

fn default_kind() -> PerturbationKind {
    PerturbationKind::Bump
}
fn default_radii() -> Vec<f64> {
    vec![1.0, 0.5, 0.25]
}
fn default_ring_m() -> f64 {
    4.0
}
fn default_slope_tol() -> f64 {
    0.15
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub symbol_samples: usize,
    pub bound_samples: usize,
    pub partition_samples: usize,
    pub landau_n_v: usize,
    pub landau_l_v: f64,
    pub l6_fields: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            symbol_samples: 10_000,
            bound_samples: 1_000,
            partition_samples: 10_000,
            landau_n_v: 64,
            landau_l_v: 8.0,
            l6_fields: 10,
        }
    }
}

/// Problems with the configuration itself; always exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl<E: std::error::Error> From<E> for ConfigError {
    fn from(e: E) -> Self {
        ConfigError(e.to_string())
    }
}

/// A parsed configuration with the SHA-256 of its source text.
pub struct Loaded {
    pub config: Config,
    pub hash: String,
}

pub fn load(path: &Path) -> Result<Loaded, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Loaded, ConfigError> {
    let config: Config = toml::from_str(text).map_err(|e| ConfigError(format!("config parse error: {e}")))?;
    let hash = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    Ok(Loaded { config, hash })
}

impl Config {
    pub fn grid(&self) -> Result<PhaseGrid, ConfigError> {
        let g = self.grid;
        Ok(PhaseGrid::new(g.dim_x, g.n_x, g.n_v, g.l_v)?)
    }

    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        let m = self.model;
        Ok(ModelParams::new(m.nu, m.beta, m.m, m.k0, m.c0, m.m0)?)
    }

    pub fn solver_config(&self, model: Model) -> Result<SolverConfig, ConfigError> {
        let grid = self.grid()?;
        let r = self.run;
        if r.dt_cells == 0 {
            return Err(ConfigError("run.dt_cells must be at least 1".into()));
        }
        let dt = r.dt_cells as f64 * grid.dxi();
        let cfg = SolverConfig {
            model,
            params: self.params()?,
            dt,
            t_end: r.steps as f64 * dt,
            scheme: r.scheme,
            cfl_safety: r.cfl_safety,
            collisions: !r.transport_only,
            monitors: Monitors::default(),
            snapshot_every: r.snapshot_every,
        };
        cfg.validate(&grid)?;
        Ok(cfg)
    }

    pub fn symbol_params(&self) -> Result<Option<SymbolParams>, ConfigError> {
        let Some(s) = self.symbol else { return Ok(None) };
        let p = s.exponent_p.unwrap_or(0.5 + s.epsilon);
        Ok(Some(SymbolParams::with_exponent(s.delta, s.epsilon, p)?))
    }

    pub fn symbol_spec(&self) -> Result<SymbolSpec, ConfigError> {
        let s = self.symbol.ok_or_else(|| ConfigError("missing [symbol] section (delta, epsilon)".into()))?;
        if s.weighted {
            let p = s.exponent_p.unwrap_or(1.0);
            Ok(SymbolSpec::Weighted(WeightedSymbolParams::with_exponent(s.delta, self.model.beta, 0, p)?))
        } else {
            Ok(SymbolSpec::Plain(self.symbol_params()?.expect("symbol present")))
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        let symbol = self.symbol_spec()?;
        let e = self
            .experiment
            .clone()
            .ok_or_else(|| ConfigError("missing [experiment] section".into()))?;
        let base_run = self.solver_config(self.model.kind)?;
        let cfg = ExperimentConfig {
            grid: self.grid()?,
            base_run,
            initial: self.initial.clone(),
            perturbation: Perturbation { kind: e.perturbation, magnitude: e.magnitude },
            symbol,
            t0: e.t0.unwrap_or(base_run.t_end),
            mollifier_radii: e.mollifier_radii,
            ring_m: e.ring_m,
            commutator_horizons: e.commutator_horizons,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nn_x = 8\nn_v = 8\nl_v = 7.0\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let l = parse(MINIMAL).unwrap();
        assert_eq!(l.hash.len(), 64);
        let c = l.config;
        assert_eq!(c.run.steps, 20);
        assert!(c.symbol.is_none());
        let s = c.solver_config(Model::Toy).unwrap();
        assert!((s.dt - std::f64::consts::PI / 7.0).abs() < 1e-15);
    }

    #[test]
    fn twin_needs_symbol_and_experiment() {
        let c = parse(&format!("{MINIMAL}[experiment]\nmagnitude = 0.0\n")).unwrap().config;
        assert!(c.experiment().unwrap_err().0.contains("symbol"));
        let c = parse(&format!("{MINIMAL}[symbol]\ndelta = 1.0\nepsilon = 0.1\n")).unwrap().config;
        assert!(c.experiment().is_err());
        let c = parse(&format!(
            "{MINIMAL}[model]\nk0 = 8.0\n[symbol]\ndelta = 1.0\nepsilon = 0.1\n[experiment]\nmagnitude = 1e-3\n"
        ))
        .unwrap()
        .config;
        c.experiment().unwrap();
    }

    #[test]
    fn initial_families_parse() {
        for fam in [
            "family = \"maxwellian\"\ndensity = 0.5",
            "family = \"perturbed-maxwellian\"\namplitude = 0.05",
            "family = \"two-bump\"\nseparation = 2.0",
            "family = \"snapshot\"\npath = \"x.mkin\"",
        ] {
            parse(&format!("{MINIMAL}[initial]\n{fam}\n")).unwrap();
        }
        assert!(parse(&format!("{MINIMAL}[initial]\nfamily = \"gamma\"\n")).is_err());
        assert!(parse(&format!("{MINIMAL}[grid2]\n")).is_err());
    }

    #[test]
    fn shipped_configs_load() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        for name in ["verify.toml", "toy.toml", "landau.toml", "twin.toml"] {
            let c = load(&dir.join(name)).unwrap().config;
            c.solver_config(c.model.kind).unwrap();
        }
        let twin = load(&dir.join("twin.toml")).unwrap().config;
        twin.experiment().unwrap();
    }
}
