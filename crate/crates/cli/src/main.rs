use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crowdflow::beckmann::{default_params, pd_solve, CorrectionProblem};
use crowdflow::eikonal::{self, solve_eikonal, velocity_from_potential};
use crowdflow::scenario::parse_scenario;
use crowdflow::simulator::{compare_runs, run};
use crowdflow::{io, Error, Result};

#[derive(Parser)]
#[command(name = "crowdflow", version, about = "Congested crowd evacuation on a grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write density snapshots and metrics.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Solve only the travel-time problem and write the potential and velocity.
    Eikonal {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Project one density CSV onto admissible densities.
    Correct {
        scenario: PathBuf,
        #[arg(long)]
        density: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run two scenarios side by side and write the difference table.
    Compare {
        scenario_a: PathBuf,
        scenario_b: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn create(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { scenario, out } => {
            let s = parse_scenario(&scenario)?;
            let result = run(&s)?;
            io::write_run(&result.snapshots, &out)?;
            let last = result.history.last().expect("history starts at step 0");
            println!(
                "{} steps, remaining mass {:.6}, {} snapshots in {}",
                last.step,
                last.total_mass,
                result.snapshots.len(),
                out.display()
            );
            if result.unconverged_corrections > 0 {
                eprintln!("warning: {} corrections hit the iteration limit", result.unconverged_corrections);
            }
        }
        Command::Eikonal { scenario, out } => {
            let s = parse_scenario(&scenario)?;
            s.validate()?;
            let params = eikonal::default_params(&s.boundary, &s.eikonal)?;
            let sol = solve_eikonal(&s.boundary, &s.speed, &params)?;
            let v = velocity_from_potential(&sol, &s.boundary)?;
            create(&out)?;
            write(&out.join("potential.csv"), io::density_csv(&sol.phi))?;
            write(&out.join("velocity_x.csv"), io::density_csv(&v.cell_x))?;
            write(&out.join("velocity_y.csv"), io::density_csv(&v.cell_y))?;
            println!("{} iterations, converged: {}", sol.iterations, sol.converged);
            if !sol.converged {
                eprintln!("warning: travel-time solve hit the iteration limit");
            }
        }
        Command::Correct { scenario, density, out } => {
            let s = parse_scenario(&scenario)?;
            let rho = io::read_density_csv(&density, *s.grid())?;
            let problem = CorrectionProblem::new(&s.boundary, rho, s.weight.clone(), s.tau, s.mode)
                .with_source_rate(s.source_rate);
            let params = default_params(&s.boundary, s.tau, &s.correction)?;
            let r = pd_solve(&problem, &params)?;
            create(&out)?;
            write(&out.join("corrected.csv"), io::density_csv(&r.rho))?;
            write(&out.join("pressure.csv"), io::density_csv(&r.pressure))?;
            println!(
                "{} iterations, converged: {}, gap {:.3e}, door outflux {:.6e}",
                r.iterations, r.converged, r.gap, r.door_outflux
            );
        }
        Command::Compare { scenario_a, scenario_b, out } => {
            let a = parse_scenario(&scenario_a)?;
            let b = parse_scenario(&scenario_b)?;
            let report = compare_runs(&a, &b)?;
            create(&out)?;
            io::write_comparison_csv(&report, &out.join("comparison.csv"))?;
            let last = report.last();
            println!(
                "remaining mass at t = {}: a {:.6}, b {:.6}, L2 difference {:.3e}",
                last.time, last.mass_a, last.mass_b, last.l2_diff
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
