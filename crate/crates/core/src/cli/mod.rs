//! Batch command-line front end: reads one JSON experiment config, runs a
//! subcommand and writes its artifacts into the output directory.

pub mod checks;
pub mod config;
pub mod svg;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::asymptotics::{epsilon_sweep, SweepOptions, SweepReport};
use crate::error::{Error, Result};
use crate::layer::{composite_approx_1d, layer_profile_1d};
use crate::problem::Domain;
use crate::rayleigh::estimate_thresholds_with;
use crate::solver::{
    mountain_pass_barrier, nehari_diagnostics, solve_ground_state, solve_mountain_pass,
    write_trace_csv, NehariDiagnostics,
};
use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "nrq",
    version,
    about = "Ground states, mountain-pass solutions and asymptotics for a quasilinear Dirichlet problem"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config; every omitted field takes its default.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Also emit SVG charts.
    #[arg(long, global = true)]
    pub svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Ground state and its diagnostics.
    Solve,
    /// Mountain-pass solution and the small-sphere barrier.
    Second,
    /// Threshold estimates from the nonlinear Rayleigh quotients.
    Thresholds,
    /// Ground states along the epsilon list with asymptotic metrics.
    Sweep,
    /// One-dimensional boundary-layer profile and composite approximation.
    Layer,
    /// Invariant suite; exits with status 1 if any check fails.
    Check,
}

/// Parses the process arguments, runs, and returns the exit status.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    run_cli(&cli)
}

/// Runs a parsed command line, printing errors to stderr.
pub fn run_cli(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_of(&e)
        }
    }
}

pub fn exit_code_of(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let source = match &cli.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?,
        None => "{}".to_string(),
    };
    let mut cfg = ExperimentConfig::parse(&source)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.command == Command::Sweep {
        cfg.require_sigma_a(&source)?;
    }
    if cli.command == Command::Layer {
        if cfg.domain != Domain::unit_interval() {
            return Err(Error::Config(
                "\"domain\": the layer subcommand needs the unit interval".into(),
            ));
        }
        if cfg.exponents.p != 2.0 {
            return Err(Error::Config(
                "\"exponents\": the layer subcommand needs p = 2".into(),
            ));
        }
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    if cli.threads == Some(0) {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    fs::create_dir_all(&cli.out)?;
    write_json(&cli.out.join("config.resolved.json"), &cfg)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Solve => cmd_solve(&cfg, &cli.out),
        Command::Second => cmd_second(&cfg, &cli.out),
        Command::Thresholds => cmd_thresholds(&cfg, &cli.out),
        Command::Sweep => cmd_sweep(&cfg, &cli.out, cli.svg),
        Command::Layer => cmd_layer(&cfg, &cli.out, cli.svg),
        Command::Check => cmd_check(&cfg, &cli.out),
    })
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn status(converged: bool) -> i32 {
    if converged {
        EXIT_OK
    } else {
        eprintln!("warning: iteration did not converge; partial artifacts written");
        EXIT_NOT_CONVERGED
    }
}

#[derive(Serialize)]
struct SolveArtifact<'a> {
    epsilon: f64,
    energy: f64,
    residual_norm: f64,
    tol_res: f64,
    converged: bool,
    iterations: usize,
    trivial: bool,
    nehari_residual: f64,
    fiber_second_derivative: f64,
    diagnostics: Option<NehariDiagnostics>,
    selected_run: usize,
    multiplicity: bool,
    delta_reg: f64,
    field: &'a crate::problem::DiscreteField,
}

fn cmd_solve(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let spec = cfg.spec()?;
    let r = solve_ground_state(&spec, None, &cfg.solver_options())?;
    let diagnostics = if r.trivial {
        None
    } else {
        Some(nehari_diagnostics(&r.field, &spec)?)
    };
    write_json(
        &out.join("solve.json"),
        &SolveArtifact {
            epsilon: spec.epsilon(),
            energy: r.energy,
            residual_norm: r.residual_norm,
            tol_res: r.tol_res,
            converged: r.converged,
            iterations: r.iterations,
            trivial: r.trivial,
            nehari_residual: r.nehari_residual,
            fiber_second_derivative: r.fiber_second_derivative,
            diagnostics,
            selected_run: r.selected_run,
            multiplicity: r.multiplicity,
            delta_reg: r.delta_reg,
            field: &r.field,
        },
    )?;
    write_trace_csv(&r.trace, create(&out.join("trace.csv"))?)?;
    println!(
        "ground state: energy {:.12e}, residual {:.3e}, converged {}, trivial {}",
        r.energy, r.residual_norm, r.converged, r.trivial
    );
    Ok(status(r.converged))
}

#[derive(Serialize)]
struct SecondArtifact<'a> {
    epsilon: f64,
    ground_energy: f64,
    ground_converged: bool,
    mountain_pass: &'a crate::solver::MountainPassReport,
    barrier: &'a crate::solver::Barrier,
}

fn cmd_second(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let spec = cfg.spec()?;
    let g = solve_ground_state(&spec, None, &cfg.solver_options())?;
    let mp = solve_mountain_pass(&spec, &g.field, &cfg.mountain_pass_options())?;
    let barrier = mountain_pass_barrier(&spec, cfg.mountain_pass.barrier_samples, cfg.seed)?;
    write_json(
        &out.join("second.json"),
        &SecondArtifact {
            epsilon: spec.epsilon(),
            ground_energy: g.energy,
            ground_converged: g.converged,
            mountain_pass: &mp,
            barrier: &barrier,
        },
    )?;
    println!(
        "mountain pass: energy {:.6e} (ground {:.6e}), residual {:.3e}, converged {}; barrier delta {:.3e} holds {}",
        mp.energy, g.energy, mp.residual_norm, mp.converged, barrier.delta, barrier.holds
    );
    Ok(status(g.converged && mp.converged))
}

fn cmd_thresholds(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let spec = cfg.spec()?;
    let th = estimate_thresholds_with(&spec, &cfg.threshold_options())?;
    write_json(&out.join("thresholds.json"), &th)?;
    println!(
        "sup Upsilon {:.10e}; eps* >= {:.10e}; eps_e* >= {:.10e}",
        th.sup_upsilon, th.eps_star, th.eps_e_star
    );
    Ok(EXIT_OK)
}

fn sweep_chart(report: &SweepReport) -> String {
    let series =
        |name: &str, f: &dyn Fn(&crate::asymptotics::SweepRow) -> Option<f64>| svg::Series {
            name: name.to_string(),
            points: report
                .rows
                .iter()
                .filter_map(|r| f(r).map(|v| (r.eps, v)))
                .collect(),
        };
    svg::line_chart(
        "Convergence to the limit profile",
        "epsilon",
        &[
            series("energy gap", &|r| Some(r.energy_gap)),
            series("J gap", &|r| Some(r.j_gap)),
            series("measure_bad", &|r| Some(r.measure_bad)),
            series("L1 error", &|r| r.lr_error(1.0)),
        ],
        true,
        true,
    )
}

fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, svg: bool) -> Result<i32> {
    let spec = cfg.spec()?;
    let th = estimate_thresholds_with(&spec, &cfg.threshold_options())?;
    let opts = SweepOptions {
        eps_list: cfg.eps_list.clone(),
        eta: cfg.asymptotics.eta,
        r_list: cfg.asymptotics.r_list.clone(),
        solver: cfg.solver_options(),
        eps_e_star: Some(th.eps_e_star),
    };
    let report = epsilon_sweep(&spec, &opts)?;
    report.write_csv(create(&out.join("sweep.csv"))?)?;
    write_json(&out.join("sweep.json"), &report)?;
    if svg {
        fs::write(out.join("sweep.svg"), sweep_chart(&report))?;
    }
    for r in &report.rows {
        println!(
            "eps {:.1e}: energy gap {:.4e}, measure_bad {:.4e}, converged {}",
            r.eps, r.energy_gap, r.measure_bad, r.converged
        );
    }
    Ok(status(report.rows.iter().all(|r| r.converged)))
}

#[derive(Serialize)]
struct LayerArtifact {
    q: f64,
    gamma: f64,
    epsilon: f64,
    xi_max: f64,
    points: usize,
    ground_energy: f64,
    ground_converged: bool,
    sup_difference: f64,
}

fn cmd_layer(cfg: &ExperimentConfig, out: &Path, svg: bool) -> Result<i32> {
    let spec = cfg.spec()?;
    let e = cfg.exponents;
    let xi_max = cfg.layer.xi_max.unwrap_or(1.25 / cfg.epsilon.sqrt());
    let profile = layer_profile_1d(e.q, e.gamma, xi_max, cfg.layer.points)?;
    profile.write_csv(create(&out.join("layer_profile.csv"))?)?;
    let composite = composite_approx_1d(cfg.epsilon, spec.mesh(), &profile)?;
    let g = solve_ground_state(&spec, None, &cfg.solver_options())?;
    let mut w = csv::Writer::from_writer(create(&out.join("composite.csv"))?);
    w.write_record(["x", "composite", "ground_state"])?;
    let mut sup = 0.0f64;
    for ((c, a), b) in spec
        .mesh()
        .coords()
        .iter()
        .zip(composite.values())
        .zip(g.field.values())
    {
        sup = sup.max((a - b).abs());
        w.write_record([
            format!("{:.16e}", c[0]),
            format!("{a:.16e}"),
            format!("{b:.16e}"),
        ])?;
    }
    w.flush()?;
    write_json(
        &out.join("layer.json"),
        &LayerArtifact {
            q: e.q,
            gamma: e.gamma,
            epsilon: cfg.epsilon,
            xi_max,
            points: cfg.layer.points,
            ground_energy: g.energy,
            ground_converged: g.converged,
            sup_difference: sup,
        },
    )?;
    if svg {
        let coords = spec.mesh().coords();
        let pts = |v: &[f64]| coords.iter().zip(v).map(|(c, &y)| (c[0], y)).collect();
        let chart = svg::line_chart(
            "Composite approximation and ground state",
            "x",
            &[
                svg::Series {
                    name: "composite".into(),
                    points: pts(composite.values()),
                },
                svg::Series {
                    name: "ground state".into(),
                    points: pts(g.field.values()),
                },
            ],
            false,
            false,
        );
        fs::write(out.join("layer.svg"), chart)?;
    }
    println!("layer: sup |composite - ground state| = {sup:.4e}");
    Ok(status(g.converged))
}

fn cmd_check(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let results = checks::run_checks(cfg.seed)?;
    write_json(&out.join("check.json"), &results)?;
    for r in &results {
        println!(
            "{} {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    Ok(if results.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}
