//! `dvft`: verify cellular complexes and run discrete Cosserat rod simulations.
//!
//! Exit codes: 0 on success, 1 on a domain failure (axiom violation, invalid
//! configuration values, solver failure), 2 on usage errors.

mod config;

use clap::{Parser, Subcommand, ValueEnum};
use config::{load_config, ConfigError, LoadedConfig, CSV_HEADER};
use dvft::cfk::CfkComplex;
use dvft::complex::CellComplex;
use dvft::complex_check::{check_complex, ComplexCheckReport};
use dvft::cubic::CubicComplex;
use dvft::rod::{initial_band, simulate, trajectory_order, Generator, RodConfig, RodModel};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dvft", version, about = "Discrete variational field theory toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ComplexKind {
    Cubic,
    Cfk,
}

#[derive(Subcommand)]
enum Command {
    /// Check the complex axioms, ∂∘∂ = 0, d∘d = 0 and Stokes on a window.
    CheckComplex {
        kind: ComplexKind,
        /// Dimension (1 to 4).
        #[arg(value_parser = clap::value_parser!(u8).range(1..=4))]
        n: u8,
        /// Half-width of the window of cells checked.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(i64).range(1..=16))]
        window: i64,
        /// Random (co)chain trials per degree.
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a rod simulation described by a TOML config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn print_check(kind: ComplexKind, n: u8, extent: i64, r: &ComplexCheckReport) {
    println!("complex: {kind:?} n={n} window={extent}");
    println!(
        "axioms: {} cells, {} incidence pairs, {} violations",
        r.axioms.cells_checked,
        r.axioms.pairs_checked,
        r.axioms.violations.len()
    );
    for v in r.axioms.violations.iter().take(10) {
        println!("  violation: {v:?}");
    }
    println!(
        "boundary^2: {} trials, {} nonzero",
        r.boundary_squared_trials, r.boundary_squared_failures
    );
    println!("d^2: {} trials, max |ddw| = {:e}", r.d_squared_trials, r.d_squared_max);
    println!("stokes: {} trials, max error = {:e}", r.stokes_trials, r.stokes_max_error);
    println!("result: {}", if r.ok() { "PASS" } else { "FAIL" });
}

fn run_check<X: CellComplex>(cx: &X, window: &[X::Cell], trials: usize, seed: u64) -> Result<ComplexCheckReport, String> {
    check_complex(cx, window, trials, seed).map_err(|e| e.to_string())
}

fn cmd_check_complex(kind: ComplexKind, n: u8, extent: i64, trials: usize, seed: u64) -> ExitCode {
    let report = match kind {
        ComplexKind::Cubic => {
            let cx = CubicComplex::new(n as usize);
            run_check(&cx, &cx.window(extent), trials, seed)
        }
        ComplexKind::Cfk => {
            let cx = CfkComplex::new(n as usize);
            run_check(&cx, &cx.window(extent), trials, seed)
        }
    };
    match report {
        Ok(r) => {
            print_check(kind, n, extent, &r);
            if r.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn write_trajectory(path: &Path, cfg: &LoadedConfig, sim: &dvft::rod::Simulation) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    w.write_record(CSV_HEADER).map_err(|e| e.to_string())?;
    for v in trajectory_order(&sim.field) {
        let (i, j) = (v.coords()[0], v.coords()[1]);
        let (s, t) = cfg.grid.position(i, j);
        let c = RodConfig::from_point(sim.field.get(v).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let m = c.rot.matrix();
        let mut rec = vec![i.to_string(), j.to_string(), s.to_string(), t.to_string()];
        rec.extend(c.r.iter().map(|x| x.to_string()));
        for a in 0..3 {
            for b in 0..3 {
                rec.push(m[(a, b)].to_string());
            }
        }
        w.write_record(&rec).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn cmd_simulate(config_path: &Path, out_dir: &Path) -> ExitCode {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(e @ (ConfigError::Io { .. } | ConfigError::Parse(_))) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let model = RodModel::new(cfg.grid, cfg.material.clone(), cfg.potential.clone());
    let band = match initial_band(&cfg.initial, &cfg.grid, cfg.length) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: initial: {e}");
            return ExitCode::from(1);
        }
    };
    let sim = match simulate(&band, cfg.steps, &model, &cfg.solver) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: simulation failed: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        eprintln!("error: {}: {e}", out_dir.display());
        return ExitCode::from(1);
    }
    let traj = out_dir.join(&cfg.output.trajectory);
    if let Err(e) = write_trajectory(&traj, &cfg, &sim) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let report = out_dir.join(&cfg.output.report);
    let json = serde_json::to_string_pretty(&sim.report).expect("report serializes");
    if let Err(e) = std::fs::write(&report, json + "\n") {
        eprintln!("error: {}: {e}", report.display());
        return ExitCode::from(1);
    }
    let labels: Vec<String> = Generator::ALL.iter().map(|g| g.label()).collect();
    let max_el = sim.report.iter().map(|r| r.max_el_residual).fold(0.0, f64::max);
    println!("steps: {}  vertices: {}", cfg.steps, sim.field.len());
    println!("generators: {}", labels.join(", "));
    println!("max EL residual: {max_el:e}");
    println!("wrote {} and {}", traj.display(), report.display());
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::CheckComplex {
            kind,
            n,
            window,
            trials,
            seed,
        } => cmd_check_complex(kind, n, window, trials, seed),
        Command::Simulate { config, out_dir } => cmd_simulate(&config, &out_dir),
    }
}
