//! Command-line front end: configuration parsing, run orchestration, state
//! persistence, diagnostics recomputation, and oracle cross-checks.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use pfsi::basis::field::BeamGrid;
use pfsi::basis::{BeamBasis, FluidBasis, Grid1d, TimeBasis};
use pfsi::basis::fourier::Fourier1d;
use pfsi::diagnostics::{coupled_weak_residual, energy, DiagContext};
use pfsi::driver::{run_continuation, ContinuationOutcome, Discretization};
use pfsi::oracles;
use pfsi::structure::{solve_structure, PenaltyInput};

use pfsi_cli::archive::{self, StateArchive};
use pfsi_cli::config::{self, parse_config, RunConfig};
use pfsi_cli::report::{
    archive_from_state, stage_checks, state_from_archive, write_energy_csv, RunSummary,
    StageSummary,
};

#[derive(Parser)]
#[command(
    name = "pfsi",
    about = "Time-periodic solver for a compressible flow coupled to an elastic beam",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the continuation schedule from a config file and write
    /// archives, CSV time series and a JSON summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// output directory (overrides output_dir in the config)
        #[arg(long)]
        out: Option<PathBuf>,
        /// tag prefixed to every artifact file name
        #[arg(long, default_value = "run")]
        stage_tag: String,
        /// seed echoed into artifacts (overrides seed in the config)
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute all diagnostics from an archived state (no solver run).
    Check {
        /// path to a .pfsi archive
        archive: PathBuf,
    },
    /// Run a brute-force oracle against the corresponding module.
    Oracle {
        #[command(subcommand)]
        which: OracleCmd,
    },
    /// Run single stages across an eps sweep at fixed delta, warm-started
    /// in order, and emit the penalty-residual table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// comma-separated list of decreasing eps values
        #[arg(long, default_value = "1e-1,1e-2,1e-3", value_delimiter = ',')]
        eps: Vec<f64>,
        /// fixed delta for every sweep stage
        #[arg(long, default_value_t = 1e-1)]
        delta: f64,
        #[arg(long, default_value = "sweep")]
        stage_tag: String,
    },
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Beam-basis Gram matrix vs dense high-order quadrature.
    GramBeam {
        #[arg(long, default_value_t = 6)]
        n: usize,
    },
    /// Fluid-basis Gram matrix vs dense high-order quadrature.
    GramFluid {
        #[arg(long, default_value_t = 8)]
        n: usize,
    },
    /// Spectral density solve vs finite-difference space-time solve.
    DensityFd {
        /// grid points per direction (capped)
        #[arg(long, default_value_t = 48)]
        n: usize,
    },
    /// Structure solver vs dense monolithic assembly.
    StructureDense,
    /// Fluid Newton solver vs finite-difference-Jacobian root finder.
    FluidFd,
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum LogLevel {
    Quiet = 0,
    Info = 1,
    Debug = 2,
}

fn log_level() -> LogLevel {
    match std::env::var("PFSI_LOG").as_deref() {
        Ok("quiet") => LogLevel::Quiet,
        Ok("debug") => LogLevel::Debug,
        _ => LogLevel::Info,
    }
}

macro_rules! info {
    ($($t:tt)*) => {
        if log_level() >= LogLevel::Info {
            eprintln!($($t)*);
        }
    };
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run {
            config,
            out,
            stage_tag,
            seed,
        } => cmd_run(&config, out.as_deref(), &stage_tag, seed),
        Command::Check { archive } => cmd_check(&archive),
        Command::Oracle { which } => cmd_oracle(which),
        Command::Sweep {
            config,
            out,
            eps,
            delta,
            stage_tag,
        } => cmd_sweep(&config, out.as_deref(), &eps, delta, &stage_tag),
    }
}

fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn cmd_run(config: &Path, out: Option<&Path>, stage_tag: &str, seed: Option<u64>) -> Result<i32> {
    let mut cfg = parse_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = output_dir(&cfg, out)?;
    let domain = cfg.domain_spec()?;
    let phys = cfg.physical_params();
    let forcing_spec = cfg.forcing_spec();
    let schedule = cfg.continuation_schedule();
    let config_json = cfg.canonical_json()?;
    let config_hash = cfg.hash()?;
    info!("config hash {config_hash}; {} stage(s)", schedule.stages.len());

    let t0 = Instant::now();
    let outcome: ContinuationOutcome = run_continuation(&schedule, domain, &phys, &forcing_spec)?;
    info!("continuation finished in {:?}", t0.elapsed());

    let mut summaries = Vec::new();
    let mut penalty_table = Vec::new();
    let mut all_converged = outcome.failure.is_none();
    let mut all_checks = true;
    for (k, s) in outcome.stages.iter().enumerate() {
        let tag = format!("{stage_tag}-stage{k}");
        let arch = archive_from_state(&config_json, &tag, &s.stage, &s.state);
        arch.save(&dir.join(format!("{tag}.pfsi")))?;
        write_energy_csv(&dir.join(format!("{tag}-energy.csv")), &s.report)?;

        let checks = stage_checks(&s.report, phys.mass);
        all_converged &= s.state.converged;
        all_checks &= checks.iter().all(|c| c.passed);
        penalty_table.push((s.stage.eps, s.report.penalty_residual));
        summaries.push(StageSummary {
            tag,
            eps: s.stage.eps,
            delta: s.stage.delta,
            m: s.stage.m,
            n_beam: s.stage.n_beam,
            n_fluid: s.stage.n_fluid,
            omega: s.stage.omega.unwrap_or(schedule.omega),
            converged: s.state.converged,
            iterations: s.state.iterations,
            final_update: s.state.update_history.last().copied().unwrap_or(0.0),
            min_rho: s.state.min_rho,
            sup_energy_delta: s.report.sup_energy_delta,
            viscous_dissipation: s.report.viscous_dissipation,
            quartic_dissipation: s.report.quartic_dissipation,
            beam_dissipation: s.report.beam_dissipation,
            forcing_work_beam: s.report.forcing_work_beam,
            forcing_work_fluid: s.report.forcing_work_fluid,
            penalty_residual: s.report.penalty_residual,
            balance_residual: s.report.balance_residual,
            balance_scale: s.report.balance_scale,
            mass_error: s.report.mass_error,
            checks,
        });
    }
    let penalty_monotone = penalty_table.windows(2).all(|w| w[1].1 <= w[0].1);

    let summary = RunSummary {
        format_version: archive::VERSION,
        config_hash,
        config: serde_json::from_str(&config_json)?,
        seed: cfg.seed,
        stages: summaries,
        penalty_table,
        penalty_monotone,
        all_converged,
        all_checks_passed: all_checks,
        failure: outcome.failure.as_ref().map(|e| e.to_string()),
    };
    let summary_path = dir.join(format!("{stage_tag}-summary.json"));
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;

    print_human_summary(&summary);
    if let Some(f) = &outcome.failure {
        eprintln!("stage failure: {f}");
    }
    Ok(if all_converged && all_checks { 0 } else { 2 })
}

fn print_human_summary(s: &RunSummary) {
    println!("config hash: {}", s.config_hash);
    println!(
        "{:<14} {:>9} {:>9} {:>6} {:>6} {:>13} {:>13} {:>13}",
        "stage", "eps", "delta", "conv", "iters", "penalty", "balance", "mass_err"
    );
    for st in &s.stages {
        println!(
            "{:<14} {:>9.1e} {:>9.1e} {:>6} {:>6} {:>13.4e} {:>13.4e} {:>13.4e}",
            st.tag,
            st.eps,
            st.delta,
            st.converged,
            st.iterations,
            st.penalty_residual,
            st.balance_residual,
            st.mass_error
        );
        for c in &st.checks {
            println!(
                "    check {:<18} {:>13.4e} <= {:>9.1e}  {}",
                c.name,
                c.value,
                c.tolerance,
                if c.passed { "PASS" } else { "FAIL" }
            );
        }
    }
    println!(
        "penalty residual monotone across stages: {}",
        if s.penalty_monotone { "PASS" } else { "FAIL" }
    );
    println!(
        "all stages converged: {}; all checks passed: {}",
        s.all_converged, s.all_checks_passed
    );
}

fn cmd_check(path: &Path) -> Result<i32> {
    let arch = StateArchive::load(path)?;
    let (cfg, disc, state) = state_from_archive(&arch)?;
    let phys = cfg.physical_params();
    let forcing = cfg.forcing_spec().realize(&disc)?;
    let ctx = DiagContext {
        disc: &disc,
        params: phys.fluid_params(&disc.domain, arch.eps, arch.delta),
        mass: phys.mass,
        forcing: &forcing,
    };
    let rep = energy(&state, &ctx)?;
    let weak = coupled_weak_residual(&state, &ctx, 2)?;
    let checks = stage_checks(&rep, phys.mass);

    let out = serde_json::json!({
        "archive": path.display().to_string(),
        "stage_tag": arch.stage_tag,
        "config_hash": format!("{:016x}", config::fnv1a(arch.config_json.as_bytes())),
        "eps": arch.eps,
        "delta": arch.delta,
        "m": arch.m,
        "n_beam": arch.n_beam,
        "n_fluid": arch.n_fluid,
        "iterations": arch.iterations,
        "converged": arch.converged,
        "sup_energy_delta": rep.sup_energy_delta,
        "viscous_dissipation": rep.viscous_dissipation,
        "quartic_dissipation": rep.quartic_dissipation,
        "beam_dissipation": rep.beam_dissipation,
        "forcing_work_beam": rep.forcing_work_beam,
        "forcing_work_fluid": rep.forcing_work_fluid,
        "penalty_residual": rep.penalty_residual,
        "balance_residual": rep.balance_residual,
        "balance_scale": rep.balance_scale,
        "mass_error": rep.mass_error,
        "max_weak_residual": weak.max_total,
        "max_physical_weak_residual": weak.max_physical,
        "constraint_defect": weak.constraint_defect,
        "checks": checks,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);

    let ok = checks.iter().all(|c| c.passed);
    if !ok {
        eprintln!("diagnostics outside tolerance: archived state is inconsistent");
    }
    Ok(if ok { 0 } else { 2 })
}

fn cmd_oracle(which: OracleCmd) -> Result<i32> {
    let outcome = match which {
        OracleCmd::GramBeam { n } => oracles::OracleOutcome {
            name: format!("beam Gram matrix, n={n}, dense quadrature"),
            max_deviation: oracles::beam_gram_dense(1.0, n, 4096)?,
            tolerance: 1e-10,
        },
        OracleCmd::GramFluid { n } => oracles::OracleOutcome {
            name: format!("fluid Gram matrix, n={n}, dense quadrature"),
            max_deviation: oracles::fluid_gram_dense(1.0, 1.0, n, 512)?,
            tolerance: 1e-10,
        },
        OracleCmd::DensityFd { n } => {
            let domain = pfsi::geometry::DomainSpec::new(1.0, 1.0, 1.0)?;
            let basis = Arc::new(FluidBasis::new(domain.length, domain.half_height, 16));
            let time = Arc::new(TimeBasis::new(domain.period, 2));
            let mut u = pfsi::basis::field::FluidField::zeros(basis.clone(), time);
            // band-limited low-mode velocity with nonzero divergence
            let target = |comp: usize, jx: usize, jz: usize| {
                basis
                    .modes()
                    .iter()
                    .position(|md| md.comp == comp && md.jx == jx && md.jz == jz)
            };
            if let Some(i) = target(0, 1, 0) {
                u.coeff[(i, 0)] = 0.02;
            }
            if let Some(i) = target(1, 0, 1) {
                u.coeff[(i, 1)] = 0.01;
            }
            let dev = oracles::density_oracle_deviation(
                &u.to_expansion(),
                &domain,
                (4, 4, 2),
                1e-1,
                2.0,
                n,
            )?;
            oracles::OracleOutcome {
                name: format!("density solve vs {n}^3 finite differences"),
                max_deviation: dev,
                tolerance: 1e-4 * (n as f64 / 48.0).powi(-2).max(1.0),
            }
        }
        OracleCmd::StructureDense => {
            let domain = pfsi::geometry::DomainSpec::new(1.0, 1.0, 1.0)?;
            let basis = Arc::new(BeamBasis::new(domain.length, 5));
            let time = Arc::new(TimeBasis::new(domain.period, 2));
            let grid = BeamGrid::new(
                Grid1d::new(Fourier1d::new(domain.length, 24), 50),
                Grid1d::new(Fourier1d::new(domain.period, 10), 22),
            );
            let (nx, nt) = grid.shape();
            let mut v_e2 = ndarray::Array2::zeros((nx, nt));
            let mut f = ndarray::Array2::zeros((nx, nt));
            for (p, &x) in grid.gx.nodes().iter().enumerate() {
                for (q, &t) in grid.gt.nodes().iter().enumerate() {
                    let wx = 2.0 * std::f64::consts::PI / domain.length;
                    let wt = 2.0 * std::f64::consts::PI / domain.period;
                    v_e2[(p, q)] = 1e-2 * (wx * x).sin() * (wt * t).cos();
                    f[(p, q)] = 1e-2 * (wx * x).sin().powi(2) * (wt * t).sin();
                }
            }
            let input = PenaltyInput {
                v_e2,
                f,
                eps: 1e-1,
            };
            let fast = solve_structure(&input, basis.clone(), time.clone(), &grid)?;
            let dense = oracles::structure_monolithic(&input, basis, time, &grid)?;
            let mut dev: f64 = 0.0;
            for (a, b) in fast.eta.coeff.iter().zip(dense.eta.coeff.iter()) {
                dev = dev.max((a - b).abs());
            }
            for (a, b) in fast.eta_t.coeff.iter().zip(dense.eta_t.coeff.iter()) {
                dev = dev.max((a - b).abs());
            }
            oracles::OracleOutcome {
                name: "structure solver vs dense monolithic assembly".into(),
                max_deviation: dev,
                tolerance: 1e-10,
            }
        }
        OracleCmd::FluidFd => {
            let domain = pfsi::geometry::DomainSpec::new(1.0, 1.0, 1.0)?;
            let disc = Discretization::new(domain, 1, 2, 8)?;
            let phys = pfsi::driver::PhysicalParams {
                gamma: 2.0,
                a_exp: 5.0,
                mu: 1.0,
                zeta: 1.0,
                mass: 2.0,
            };
            let spec = pfsi::driver::ForcingSpec {
                beam: vec![],
                fluid: vec![pfsi::driver::ForcingMode {
                    amplitude: 1e-2,
                    space_mode: 2,
                    time_mode: 1,
                }],
            };
            let forcing = spec.realize(&disc)?;
            let state = pfsi::driver::quiescent_state(&disc, &phys, 1e-1)?;
            let sys = pfsi::fluid::FluidSystem::new(
                disc.fluid.clone(),
                disc.time.clone(),
                &disc.quad,
                &disc.beam_grid,
                domain.half_height,
                &state.rho.expansion,
                &state.u,
                &state.eta,
                &forcing.fluid,
                phys.fluid_params(&disc.domain, 1e-1, 1e-1),
            )?;
            let newton = sys.solve(&state.u, &pfsi::fluid::FluidSolveOptions::default())?;
            let fd = oracles::fluid_fd_solve(&sys, &state.u)?;
            let mut dev: f64 = 0.0;
            for (a, b) in newton.coeff.iter().zip(fd.coeff.iter()) {
                dev = dev.max((a - b).abs());
            }
            oracles::OracleOutcome {
                name: "fluid Newton solve vs finite-difference-Jacobian root finder".into(),
                max_deviation: dev,
                tolerance: 1e-9,
            }
        }
    };
    println!(
        "{}: max deviation {:.6e} (tolerance {:.1e}) {}",
        outcome.name,
        outcome.max_deviation,
        outcome.tolerance,
        if outcome.passed() { "PASS" } else { "FAIL" }
    );
    Ok(if outcome.passed() { 0 } else { 2 })
}

fn cmd_sweep(
    config: &Path,
    out: Option<&Path>,
    eps_list: &[f64],
    delta: f64,
    stage_tag: &str,
) -> Result<i32> {
    let cfg = parse_config(config)?;
    if eps_list.is_empty() {
        bail!("--eps: at least one value required");
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        bail!("--eps: values must be strictly decreasing");
    }
    let dir = output_dir(&cfg, out)?;
    let domain = cfg.domain_spec()?;
    let phys = cfg.physical_params();
    let d = cfg.discretization;
    let disc = Discretization::new(domain, d.m, d.n_beam, d.n_fluid)?;
    let forcing = cfg.forcing_spec().realize(&disc)?;
    let config_json = cfg.canonical_json()?;

    let mut prev: Option<pfsi::driver::CoupledState> = None;
    let mut table = Vec::new();
    let mut all_ok = true;
    for (k, &eps) in eps_list.iter().enumerate() {
        let t0 = Instant::now();
        let initial = match &prev {
            Some(s) => pfsi::driver::embed_state(s, &disc, &phys, eps)?,
            None => pfsi::driver::quiescent_state(&disc, &phys, eps)?,
        };
        let mut sp = pfsi::driver::StageParams::new(eps, delta);
        sp.omega = pfsi::driver::suggested_omega(eps).max(0.05);
        sp.max_iters = 4000;
        sp.accel = pfsi::driver::Acceleration::Anderson { depth: 8 };
        let state = pfsi::driver::run_stage(initial, &disc, &phys, &forcing, &sp)?;
        let ctx = DiagContext {
            disc: &disc,
            params: phys.fluid_params(&disc.domain, eps, delta),
            mass: phys.mass,
            forcing: &forcing,
        };
        let rep = energy(&state, &ctx)?;
        info!(
            "sweep eps={eps:.1e}: converged={} iters={} penalty={:.4e} [{:?}]",
            state.converged,
            state.iterations,
            rep.penalty_residual,
            t0.elapsed()
        );
        all_ok &= state.converged;
        let tag = format!("{stage_tag}-eps{k}");
        let stage = pfsi::driver::Stage {
            m: d.m,
            n_beam: d.n_beam,
            n_fluid: d.n_fluid,
            eps,
            delta,
            tol: sp.tol,
            max_iters: sp.max_iters,
            omega: Some(sp.omega),
            accel: sp.accel,
        };
        archive_from_state(&config_json, &tag, &stage, &state)
            .save(&dir.join(format!("{tag}.pfsi")))?;
        table.push((eps, rep.penalty_residual));
        prev = Some(state);
    }

    let mut csv = String::from("eps,penalty_residual\n");
    println!("{:>10} {:>16}", "eps", "penalty");
    for (eps, p) in &table {
        println!("{eps:>10.1e} {p:>16.6e}");
        csv.push_str(&format!("{eps:.17e},{p:.17e}\n"));
    }
    std::fs::write(dir.join(format!("{stage_tag}-penalty.csv")), csv)?;
    let monotone = table.windows(2).all(|w| w[1].1 <= w[0].1);
    println!(
        "penalty residual monotone decreasing: {}",
        if monotone { "PASS" } else { "FAIL" }
    );
    Ok(if all_ok && monotone { 0 } else { 2 })
}
