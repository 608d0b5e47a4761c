mod config;
mod verify;

use clap::{Parser, Subcommand};
use config::{Config, ConfigError};
use mkin_core::harness::{self, CheckStatus};
use mkin_core::solver::{self, Model, Solver};
use mkin_core::spectral;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mkin", version, about = "Verification suites, kinetic solvers and twin-run experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed of the randomized sweeps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Run the symbol, partition, spectral and coefficient property checks.
    Verify,
    /// Integrate the toy model.
    SolveToy,
    /// Integrate the viscous Landau equation.
    SolveLandau,
    /// Twin-run stability experiment.
    Twin,
    /// Summarize the outputs already present in the output directory.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::SolveToy => "solve-toy",
            Command::SolveLandau => "solve-landau",
            Command::Twin => "twin",
            Command::Report => "report",
        }
    }
}

enum Failure {
    /// A check failed or a run aborted.
    Scientific(String),
    /// Bad configuration, arguments or output location.
    Usage(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

fn classify(e: mkin_core::Error) -> Failure {
    use mkin_core::Error as E;
    match e {
        E::Instability { .. } => Failure::Scientific(e.to_string()),
        _ => Failure::Usage(e.to_string()),
    }
}

fn io_usage(e: std::io::Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = cli.log.parse::<log::LevelFilter>().unwrap_or(log::LevelFilter::Warn);
    env_logger::Builder::new().filter_level(level).target(env_logger::Target::Stderr).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Scientific(m)) => {
            eprintln!("mkin: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("mkin: {m}");
            ExitCode::from(2)
        }
    }
}

/// Creates the output directory and proves it is writable.
fn prepare_out(dir: &Path) -> Result<(), Failure> {
    let fail = |e: std::io::Error| Failure::Usage(format!("output directory {} is not writable: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".mkin-write-probe");
    std::fs::write(&probe, b"").map_err(fail)?;
    std::fs::remove_file(&probe).map_err(fail)?;
    Ok(())
}

fn load_config(cli: &Cli) -> Result<(Config, String), Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Usage("--config is required".into()))?;
    let loaded = config::load(path)?;
    Ok((loaded.config, loaded.hash))
}

fn meta(command: Command, hash: &str, seed: u64) -> String {
    format!("mkin {} command={} config_sha256={hash} seed={seed}", env!("CARGO_PKG_VERSION"), command.name())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.command == Command::Report {
        return report(&cli.out);
    }
    let (cfg, hash) = load_config(cli)?;
    prepare_out(&cli.out)?;
    let meta = meta(cli.command, &hash, cli.seed);
    match cli.command {
        Command::Verify => verify_cmd(&cfg, cli, &meta),
        Command::SolveToy => solve(&cfg, Model::Toy, &cli.out, &meta),
        Command::SolveLandau => solve(&cfg, Model::Landau, &cli.out, &meta),
        Command::Twin => twin(&cfg, &cli.out, &meta),
        Command::Report => unreachable!(),
    }
}

fn verify_cmd(cfg: &Config, cli: &Cli, meta: &str) -> Result<(), Failure> {
    let sym = match cfg.symbol_params()? {
        Some(s) => s,
        None => mkin_core::msymbol::SymbolParams::new(1.0, 0.1).map_err(classify)?,
    };
    let checks = verify::run(cfg, sym, cli.seed).map_err(classify)?;
    std::fs::write(cli.out.join("verify.csv"), verify::csv(&checks, meta)).map_err(io_usage)?;
    for c in &checks {
        println!("{} {} measured={:.6e} bound={:.6e} {}", c.status.label(), c.name, c.measured, c.bound, c.note);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| c.failed()).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Scientific(format!("failed checks: {}", failed.join(", "))))
    }
}

fn solve(cfg: &Config, model: Model, out: &Path, meta: &str) -> Result<(), Failure> {
    let grid = cfg.grid()?;
    let run = cfg.solver_config(model)?;
    let f0 = cfg.initial.build(&grid).map_err(classify)?;
    let report = solver::validate_initial(&f0, &run.params, model);
    for c in &report.checks {
        log::info!("initial check {}: measured={:e} bound={:e} pass={}", c.name, c.measured, c.bound, c.pass);
    }
    let solver = Solver::new(grid, run).map_err(classify)?;
    let traj = solver.run(&f0).map_err(classify)?;
    solver::write_trajectory(out, &traj, meta).map_err(classify)?;
    let text = trajectory_summary(&traj.diagnostics, meta);
    std::fs::write(out.join("summary.txt"), &text).map_err(io_usage)?;
    print!("{text}");
    if let Some(t) = traj.events.positivity_violation {
        log::warn!("positivity monitor tripped at t = {t}");
    }
    Ok(())
}

fn trajectory_summary(d: &[solver::StepDiagnostics], meta: &str) -> String {
    let mut s = format!("# {meta}\n");
    let (Some(first), Some(last)) = (d.first(), d.last()) else {
        return s;
    };
    let scale = (first.mass.abs() * first.energy.abs().max(f64::MIN_POSITIVE)).sqrt().max(f64::MIN_POSITIVE);
    let mom = d
        .iter()
        .map(|x| (0..3).map(|i| (x.momentum[i] - first.momentum[i]).powi(2)).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max)
        / scale;
    s.push_str(&format!("steps               {}\n", d.len() - 1));
    s.push_str(&format!("t_end               {:.6e}\n", last.time));
    s.push_str(&format!("mass_drift          {:.6e}\n", solver::relative_drift(d.iter().map(|x| x.mass))));
    s.push_str(&format!("momentum_drift      {mom:.6e}\n"));
    s.push_str(&format!("energy_change       {:.6e}\n", last.energy - first.energy));
    s.push_str(&format!("min_f               {:.6e}\n", d.iter().map(|x| x.min_f).fold(f64::INFINITY, f64::min)));
    s.push_str(&format!("rho_min             {:.6e}\n", d.iter().map(|x| x.rho_min).fold(f64::INFINITY, f64::min)));
    s
}

fn twin(cfg: &Config, out: &Path, meta: &str) -> Result<(), Failure> {
    let exp = cfg.experiment()?;
    let section = cfg.experiment.clone().expect("validated above");
    let report = harness::twin_run(&exp).map_err(classify)?;
    harness::write_report(out, &report, meta).map_err(classify)?;
    print!("{}", harness::report_text(&report, meta));
    let mut ok = report.passed();
    if !section.sweep.is_empty() {
        let sweep = harness::stability_sweep(&exp, &section.sweep).map_err(classify)?;
        std::fs::write(out.join("slope.csv"), harness::slope_csv(&sweep, meta)).map_err(io_usage)?;
        for (i, r) in sweep.reports.iter().enumerate() {
            harness::write_report(out.join(format!("sweep_{i:02}")), r, meta).map_err(classify)?;
            ok &= r.passed();
        }
        let within = (sweep.slope - 1.0).abs() <= section.slope_tolerance;
        println!(
            "{} stability_slope measured={:.6e} bound=1±{}",
            if within { CheckStatus::Pass.label() } else { CheckStatus::Fail.label() },
            sweep.slope,
            section.slope_tolerance
        );
        ok &= within;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Scientific("twin-run invariants failed; see report.txt".into()))
    }
}

fn read_meta(path: &Path) -> Option<String> {
    let text = std::fs::read_to_string(path).ok()?;
    text.lines().next()?.strip_prefix("# ").map(str::to_owned)
}

/// Summarizes `diagnostics.csv` and `report.txt` found in `out`.
fn report(out: &Path) -> Result<(), Failure> {
    let diag = out.join("diagnostics.csv");
    let twin = out.join("report.txt");
    if !diag.exists() && !twin.exists() {
        return Err(Failure::Usage(format!("no diagnostics.csv or report.txt in {}", out.display())));
    }
    let mut text = String::new();
    if diag.exists() {
        let rows = spectral::read_csv_rows(&diag).map_err(classify)?;
        let d: Vec<solver::StepDiagnostics> = rows
            .iter()
            .filter(|r| r.len() == 9)
            .map(|r| solver::StepDiagnostics {
                time: r[0],
                mass: r[1],
                momentum: [r[2], r[3], r[4]],
                energy: r[5],
                min_f: r[6],
                rho_min: r[7],
                weighted_sup: r[8],
            })
            .collect();
        text.push_str(&trajectory_summary(&d, &read_meta(&diag).unwrap_or_default()));
    }
    if twin.exists() {
        text.push_str(&std::fs::read_to_string(&twin).map_err(io_usage)?);
    }
    std::fs::write(out.join("summary.txt"), &text).map_err(io_usage)?;
    print!("{text}");
    Ok(())
}
