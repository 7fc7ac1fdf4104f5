//! Command-line front-end of the pose solver: solve correspondence files,
//! run benchmark sweeps, run the structural verification suite.
//!
//! Exit codes: 0 success, 2 argument or input-file parse errors, 3 solver
//! failures, 4 I/O failures, 5 verification failures.

use clap::{Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use sylvpose::sim_bench::{
    rotation_error_deg, run_benchmark, summarize, translation_error, write_csv, BenchSpec,
    SceneKind,
};
use sylvpose::solver::{Method, SolveError, SolverConfig};
use sylvpose::verify::{run_verification, Fault};
use sylvpose_cli::format;

const EXIT_PARSE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_VERIFY: u8 = 5;

#[derive(Parser)]
#[command(
    name = "sylvpose",
    version,
    about = "Closed-form pose estimation from mixed 3D-3D and 3D-2D correspondences",
    after_help = "Exit codes: 0 success, 2 parse error, 3 solver error, 4 I/O error, \
                  5 verification failure.\nSYLVPOSE_THREADS caps benchmark trial parallelism."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the pose for one correspondence file and print the estimate.
    Solve {
        /// Correspondence file (see the README for the text format).
        input: PathBuf,
        /// Elimination degree of the resultant system.
        #[arg(long, default_value = "deg7")]
        method: Method,
        /// Newton-polish accepted candidates (the default).
        #[arg(long, overrides_with = "no_polish")]
        polish: bool,
        /// Keep raw eigenvector candidates without the Newton polish.
        #[arg(long)]
        no_polish: bool,
        /// Machine-readable JSON report instead of the human summary.
        #[arg(long)]
        json: bool,
    },
    /// Run a benchmark sweep and write one CSV row per trial.
    Bench {
        /// Sweep family: noise (sigma grid, N = 100), count (constraint-count
        /// grid, sigma = 0.1 m), pnp (point-count grid, sigma = 1 px).
        #[arg(long, value_enum)]
        sweep: Sweep,
        /// Scenes per (method, size, sigma) cell.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Comma-separated methods to run.
        #[arg(long, value_delimiter = ',', default_value = "deg7,deg8,deg9")]
        methods: Vec<Method>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Master seed; records are reproducible per seed.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Print the per-cell summary as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run the structural verification suite on random scenes.
    Verify {
        /// Number of random scenes the invariants are checked on.
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Seed of the scene stream.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        /// Corrupt the eliminant before checking; a healthy suite must fail.
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sweep {
    Noise,
    Count,
    Pnp,
}

fn main() -> ExitCode {
    init_threads();
    match Cli::parse().command {
        Command::Solve {
            input,
            method,
            polish,
            no_polish,
            json,
        } => cmd_solve(&input, method, polish || !no_polish, json),
        Command::Bench {
            sweep,
            trials,
            methods,
            out,
            seed,
            json,
        } => cmd_bench(sweep, trials, &methods, &out, seed, json),
        Command::Verify {
            trials,
            seed,
            json,
            inject_fault,
        } => cmd_verify(trials, seed, json, inject_fault),
    }
}

/// Applies the SYLVPOSE_THREADS cap before any parallel work starts.
fn init_threads() {
    if let Ok(value) = std::env::var("SYLVPOSE_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn cmd_solve(input: &Path, method: Method, polish: bool, json: bool) -> ExitCode {
    let text = match std::fs::read_to_string(input) {
        Ok(text) => text,
        Err(err) => {
            eprintln!("error: cannot read {}: {err}", input.display());
            return ExitCode::from(EXIT_IO);
        }
    };
    let file = match format::parse_str(&text) {
        Ok(file) => file,
        Err(err) => {
            eprintln!("error: {}: {err}", input.display());
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let config = SolverConfig {
        method,
        polish,
        ..SolverConfig::default()
    };
    let solution = match sylvpose::solve(&file.correspondences, &config) {
        Ok(solution) => solution,
        Err(err) => {
            let stage = match &err {
                SolveError::Reduction(_) => "reduction",
                SolveError::Elimination(_) => "elimination",
                SolveError::Eigen(_) => "eigensolve",
                SolveError::NoCandidates => "extraction",
            };
            eprintln!("error: solver failed in {stage}: {err}");
            return ExitCode::from(EXIT_SOLVER);
        }
    };

    let truth_rotation = file
        .truth_quaternion
        .map(|q| sylvpose::reduction::rotation_from_quat(&q));
    let delta_r = truth_rotation.map(|r| rotation_error_deg(&solution.rotation, &r));
    let delta_t = file
        .truth_translation
        .map(|t| translation_error(&solution.translation, &t));

    if json {
        let r = &solution.rotation;
        let report = serde_json::json!({
            "method": solution.method.label(),
            "cost": solution.cost,
            "quaternion": solution.quaternion,
            "rotation": [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            "translation": [solution.translation.x, solution.translation.y, solution.translation.z],
            "candidates": solution.candidates.len(),
            "timings_us": {
                "reduction": solution.timings.reduction.as_micros() as u64,
                "elimination": solution.timings.elimination.as_micros() as u64,
                "eigen": solution.timings.eigen.as_micros() as u64,
                "selection": solution.timings.selection.as_micros() as u64,
                "core": solution.timings.core().as_micros() as u64,
            },
            "truth_error": delta_r.map(|dr| serde_json::json!({
                "delta_r_deg": dr,
                "delta_t_m": delta_t,
            })),
        });
        println!("{report}");
    } else {
        let q = solution.quaternion;
        println!("method: {}", solution.method);
        println!("cost: {:.6e}", solution.cost);
        println!("candidates: {}", solution.candidates.len());
        println!("quaternion (w x y z): {} {} {} {}", q[0], q[1], q[2], q[3]);
        println!("rotation:");
        for i in 0..3 {
            let r = &solution.rotation;
            println!("  {:>12.8} {:>12.8} {:>12.8}", r[(i, 0)], r[(i, 1)], r[(i, 2)]);
        }
        let t = &solution.translation;
        println!("translation: {} {} {}", t.x, t.y, t.z);
        let tm = &solution.timings;
        println!(
            "timing: reduction {} us, elimination {} us, eigen {} us, selection {} us (core {} us)",
            tm.reduction.as_micros(),
            tm.elimination.as_micros(),
            tm.eigen.as_micros(),
            tm.selection.as_micros(),
            tm.core().as_micros()
        );
        if let Some(dr) = delta_r {
            print!("error vs embedded truth: rotation {dr:.3e} deg");
            if let Some(dt) = delta_t {
                print!(", translation {dt:.3e} m");
            }
            println!();
        }
    }
    ExitCode::SUCCESS
}

fn cmd_bench(
    sweep: Sweep,
    trials: usize,
    methods: &[Method],
    out: &Path,
    seed: u64,
    json: bool,
) -> ExitCode {
    let (kind, sizes, sigmas): (SceneKind, Vec<usize>, Vec<f64>) = match sweep {
        Sweep::Noise => (
            SceneKind::ThreeD,
            vec![100],
            vec![0.0, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30],
        ),
        Sweep::Count => (
            SceneKind::ThreeD,
            vec![10, 20, 30, 40, 50, 60, 70, 80, 90],
            vec![0.1],
        ),
        Sweep::Pnp => (SceneKind::Pnp, vec![4, 6, 8, 10, 15, 20, 30], vec![1.0]),
    };
    let spec = BenchSpec {
        kind,
        methods: methods.to_vec(),
        sizes,
        sigmas,
        trials,
        master_seed: seed,
    };
    // Open the output before the sweep so a bad path fails in milliseconds,
    // not after the last trial.
    let file = match std::fs::File::create(out) {
        Ok(file) => file,
        Err(err) => {
            eprintln!("error: cannot create {}: {err}", out.display());
            return ExitCode::from(EXIT_IO);
        }
    };
    let records = run_benchmark(&spec);

    let mut writer = std::io::BufWriter::new(file);
    if let Err(err) = write_csv(&mut writer, &records).and_then(|()| {
        use std::io::Write as _;
        writer.flush()
    }) {
        eprintln!("error: writing {}: {err}", out.display());
        return ExitCode::from(EXIT_IO);
    }

    let summary = summarize(&records);
    if json {
        println!("{summary}");
    } else {
        println!("{}", summary_table(&summary));
        println!("{} records written to {}", records.len(), out.display());
    }
    ExitCode::SUCCESS
}

/// Renders the per-cell JSON summary as an aligned text table.
fn summary_table(summary: &serde_json::Value) -> String {
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<6} {:>5} {:>6} {:>7} {:>13} {:>13} {:>12}",
        "method", "N", "sigma", "ok", "mean_dr_deg", "mean_dt_m", "med_time_us"
    );
    for cell in summary["cells"].as_array().into_iter().flatten() {
        let _ = writeln!(
            table,
            "{:<6} {:>5} {:>6} {:>7} {:>13.4e} {:>13.4e} {:>12.0}",
            cell["method"].as_str().unwrap_or("?"),
            cell["N"].as_u64().unwrap_or(0),
            cell["sigma"].as_str().unwrap_or("?"),
            format!("{}/{}", cell["ok"], cell["trials"]),
            cell["mean_delta_r_deg"].as_f64().unwrap_or(f64::NAN),
            cell["mean_delta_t_m"].as_f64().unwrap_or(f64::NAN),
            cell["median_solve_time_us"].as_f64().unwrap_or(f64::NAN),
        );
    }
    table.pop();
    table
}

fn cmd_verify(trials: usize, seed: u64, json: bool, fault: Option<Fault>) -> ExitCode {
    let report = run_verification(trials, seed, fault);
    if json {
        println!("{}", report.to_json());
    } else {
        for check in &report.checks {
            let mark = if check.passed { "PASS" } else { "FAIL" };
            println!("{mark} {:<24} {}", check.name, check.detail);
        }
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        eprintln!("verification failed for seed {seed}");
        ExitCode::from(EXIT_VERIFY)
    }
}
