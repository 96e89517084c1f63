//! Command-line front end: every subcommand reads a TOML plan (see the
//! README for the schema) and writes its results into `--out`.
//!
//! Exit codes: 0 success, 1 usage/config problems, 2 numerical failure
//! (divergence, past-breaking, CFL, ...), 3 I/O.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gkdv::error::Error;
use gkdv::export::{write_field_csv, write_trajectory_bin, write_trajectory_csv};
use gkdv::flux::DispersionParams;
use gkdv::harness::{expansion_for, resolve_plan, run_continuity_check, run_sweep, SweepPlan};
use gkdv::solver::{evolve, SolverConfig, Trajectory};

#[derive(Parser)]
#[command(
    name = "gkdv",
    version,
    about = "Generalized KdV solvers, the dispersionless limit, and expansion sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single dispersive run (first sweep value); writes the trajectory.
    Solve(RunArgs),
    /// Critical time and the dispersionless solution at t_eval.
    Hopf(RunArgs),
    /// Expansion coefficient fields v0..vN at t_eval.
    Transport(RunArgs),
    /// Full epsilon sweep: remainders and fitted orders.
    Expand(RunArgs),
    /// Two-parameter continuity path (n_dispersion = 2).
    Continuity(RunArgs),
    /// Conservation audit of a single run.
    Invariants(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML plan file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Output format; not every subcommand supports every format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Reserved: all runs are deterministic (no RNG anywhere); accepted for
    /// interface stability.
    #[arg(long)]
    seedless: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Bin,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successes; everything else is usage.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => 3,
        Error::Config(_) | Error::InvalidArgument(_) => 1,
        e if e.is_numerical() => 2,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Hopf(args) => cmd_hopf(&args),
        Command::Transport(args) => cmd_transport(&args),
        Command::Expand(args) => cmd_expand(&args, false),
        Command::Continuity(args) => cmd_expand(&args, true),
        Command::Invariants(args) => cmd_invariants(&args),
    }
}

fn load(args: &RunArgs) -> Result<SweepPlan, Error> {
    let plan = SweepPlan::load(&args.config)?;
    fs::create_dir_all(&args.out)?;
    Ok(plan)
}

fn format_or(args: &RunArgs, default: Format, allowed: &[Format]) -> Result<Format, Error> {
    let f = args.format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(Error::InvalidArgument(
            "unsupported --format for this subcommand (see --help)".into(),
        ))
    }
}

/// Evolve the plan's first sweep value.
fn first_run(plan: &SweepPlan) -> Result<(Trajectory, f64), Error> {
    let resolved = resolve_plan(plan)?;
    let q = plan.eps_values[0];
    let (e1, e2) = match plan.n_dispersion {
        1 => (q, 0.0),
        _ => {
            let d = plan.direction.expect("validated by resolve_plan");
            (d.alpha * q, d.beta * q * q)
        }
    };
    let eps = match plan.n_dispersion {
        1 => DispersionParams::single(e1)?,
        _ => DispersionParams::pair(e1, e2)?,
    };
    let cfg = SolverConfig {
        dt: resolved.dt,
        t_end: resolved.t_eval,
        scheme: plan.solver.scheme,
        dealiasing: plan.solver.dealiasing,
        cfl_safety: plan.solver.cfl_safety,
        snapshot_stride: None,
    };
    let datum = resolved.cache.flow().initial_field();
    Ok((evolve(&datum, &resolved.model, &eps, &cfg)?, q))
}

fn cmd_solve(args: &RunArgs) -> Result<(), Error> {
    let plan = load(args)?;
    let format = format_or(args, Format::Csv, &[Format::Csv, Format::Bin])?;
    let (traj, q) = first_run(&plan)?;
    let path = match format {
        Format::Csv => {
            let path = args.out.join("solution.csv");
            let mut file = fs::File::create(&path)?;
            write_trajectory_csv(&mut file, &traj)?;
            path
        }
        Format::Bin => {
            let path = args.out.join("solution.bin");
            let mut file = fs::File::create(&path)?;
            write_trajectory_bin(&mut file, &traj)?;
            path
        }
        Format::Json => unreachable!("filtered by format_or"),
    };
    let drift = traj.drift();
    println!(
        "solved to t = {} at eps = {q:.6e}; {} snapshots -> {}",
        traj.final_time(),
        traj.times.len(),
        path.display()
    );
    println!(
        "drift: mass {:.3e}, momentum {:.3e}, energy {:.3e}",
        drift.mass, drift.momentum, drift.energy
    );
    Ok(())
}

fn cmd_hopf(args: &RunArgs) -> Result<(), Error> {
    let plan = load(args)?;
    let format = format_or(args, Format::Csv, &[Format::Csv, Format::Bin, Format::Json])?;
    let resolved = resolve_plan(&plan)?;
    let critical = resolved.cache.flow().critical_time();
    println!("t_c = {}", critical.t_c);
    if let Some(xi) = critical.arg_xi {
        println!("breaking foot-point xi = {xi}");
    }
    let sol = resolved.cache.at(resolved.t_eval)?;
    match format {
        Format::Csv => {
            for (name, field) in [
                ("hopf_v0.csv", &sol.v0),
                ("hopf_v0_x.csv", &sol.v0_x),
                ("hopf_v0_xx.csv", &sol.v0_xx),
            ] {
                let mut file = fs::File::create(args.out.join(name))?;
                write_field_csv(&mut file, field, sol.t)?;
            }
            println!(
                "wrote hopf_v0.csv, hopf_v0_x.csv, hopf_v0_xx.csv at t = {} -> {}",
                sol.t,
                args.out.display()
            );
        }
        Format::Bin => {
            let traj = Trajectory {
                times: vec![sol.t],
                states: vec![sol.v0.clone()],
                diagnostics: vec![gkdv::flux::gkdv_invariants(
                    &sol.v0,
                    &resolved.model,
                    &DispersionParams::single(0.0)?,
                )],
            };
            let mut file = fs::File::create(args.out.join("hopf_v0.bin"))?;
            write_trajectory_bin(&mut file, &traj)?;
            println!("wrote hopf_v0.bin at t = {}", sol.t);
        }
        Format::Json => {
            let payload = serde_json::json!({
                "t_c": critical.t_c,
                "arg_xi": critical.arg_xi,
                "t_eval": resolved.t_eval,
            });
            let path = args.out.join("hopf.json");
            fs::write(&path, serde_json::to_string_pretty(&payload).unwrap())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn cmd_transport(args: &RunArgs) -> Result<(), Error> {
    let plan = load(args)?;
    let format = format_or(args, Format::Csv, &[Format::Csv, Format::Bin])?;
    let resolved = resolve_plan(&plan)?;
    let coeffs = expansion_for(&resolved)?;
    for (k, field) in coeffs.fields.iter().enumerate() {
        match format {
            Format::Csv => {
                let mut file = fs::File::create(args.out.join(format!("v{k}.csv")))?;
                write_field_csv(&mut file, field, coeffs.time)?;
            }
            Format::Bin => {
                let traj = Trajectory {
                    times: vec![coeffs.time],
                    states: vec![field.clone()],
                    diagnostics: vec![gkdv::flux::gkdv_invariants(
                        field,
                        &resolved.model,
                        &DispersionParams::single(0.0)?,
                    )],
                };
                let mut file = fs::File::create(args.out.join(format!("v{k}.bin")))?;
                write_trajectory_bin(&mut file, &traj)?;
            }
            Format::Json => unreachable!("filtered by format_or"),
        }
    }
    println!(
        "wrote v0..v{} at t = {} -> {}",
        coeffs.order,
        coeffs.time,
        args.out.display()
    );
    Ok(())
}

fn cmd_expand(args: &RunArgs, continuity: bool) -> Result<(), Error> {
    let plan = load(args)?;
    let format = format_or(args, Format::Json, &[Format::Json, Format::Csv])?;
    let report = if continuity {
        run_continuity_check(&plan)?
    } else {
        run_sweep(&plan)?
    };
    let stem = if continuity {
        "continuity_report"
    } else {
        "expansion_report"
    };
    match format {
        Format::Json => {
            let path = args.out.join(format!("{stem}.json"));
            fs::write(&path, report.to_json())?;
            println!("wrote {}", path.display());
        }
        Format::Csv => {
            let path = args.out.join(format!("{stem}.csv"));
            let mut text = String::from("eps,m,remainder,remainder_l2,sobolev_index\n");
            for row in &report.rows {
                for m in 0..row.remainders.len() {
                    text.push_str(&format!(
                        "{:.16e},{m},{:.16e},{:.16e},{:.16e}\n",
                        row.eps, row.remainders[m], row.remainders_l2[m], row.sobolev_indices[m]
                    ));
                }
            }
            fs::write(&path, text)?;
            println!("wrote {}", path.display());
        }
        Format::Bin => unreachable!("filtered by format_or"),
    }
    for (m, order) in report.fitted_orders.iter().enumerate() {
        println!("fitted order m{m}: {order}");
    }
    Ok(())
}

fn cmd_invariants(args: &RunArgs) -> Result<(), Error> {
    let plan = load(args)?;
    let format = format_or(args, Format::Csv, &[Format::Csv, Format::Json])?;
    let (traj, q) = first_run(&plan)?;
    let first = &traj.diagnostics[0];
    let drift = traj.drift();
    let mass_ok = drift.mass.abs() <= 1e-10 * (1.0 + first.mass.abs());
    let momentum_ok = drift.momentum.abs() <= 1e-9 * first.momentum.abs().max(1e-300);
    let energy_ok = drift.energy.abs() <= 1e-8 * first.energy.abs().max(1e-300);

    match format {
        Format::Csv => {
            let path = args.out.join("invariants.csv");
            let mut text = String::from("t,mass,momentum,energy\n");
            for (t, inv) in traj.times.iter().zip(&traj.diagnostics) {
                text.push_str(&format!(
                    "{t:.16e},{:.16e},{:.16e},{:.16e}\n",
                    inv.mass, inv.momentum, inv.energy
                ));
            }
            fs::write(&path, text)?;
            println!("wrote {}", path.display());
        }
        Format::Json => {
            let payload = serde_json::json!({
                "eps": q,
                "initial": {
                    "mass": first.mass,
                    "momentum": first.momentum,
                    "energy": first.energy,
                },
                "drift": {
                    "mass": drift.mass,
                    "momentum": drift.momentum,
                    "energy": drift.energy,
                },
                "audit": {
                    "mass": mass_ok,
                    "momentum": momentum_ok,
                    "energy": energy_ok,
                },
            });
            let path = args.out.join("invariants.json");
            fs::write(&path, serde_json::to_string_pretty(&payload).unwrap())?;
            println!("wrote {}", path.display());
        }
        Format::Bin => unreachable!("filtered by format_or"),
    }
    for (name, ok, value) in [
        ("mass", mass_ok, drift.mass),
        ("momentum", momentum_ok, drift.momentum),
        ("energy", energy_ok, drift.energy),
    ] {
        println!(
            "{}: drift {value:.3e} {}",
            name,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if mass_ok && momentum_ok && energy_ok {
        Ok(())
    } else {
        Err(Error::SolverDivergence {
            last_valid_time: traj.final_time(),
            reason: "conservation audit failed".into(),
        })
    }
}

// Referenced by integration tests to locate sibling fixtures.
#[allow(dead_code)]
fn fixture_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}
