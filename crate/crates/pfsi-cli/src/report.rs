//! Report emission (CSV time series, JSON summaries) and the glue between
//! archived coefficient arrays and live solver states.

use std::path::Path;

use anyhow::{bail, Context, Result};
use pfsi::basis::field::ScalarExpansion;
use pfsi::density::{DensityDiscretization, DensityField};
use pfsi::diagnostics::EnergyReport;
use pfsi::driver::{CoupledState, Discretization, Stage};
use pfsi::structure::BeamState;
use serde::Serialize;

use crate::archive::{StateArchive, VERSION};
use crate::config::RunConfig;

/// CSV time series: one row per quadrature time node. The dissipation,
/// work and residual columns are whole-period integrals, repeated on every
/// row for ease of downstream plotting.
pub fn write_energy_csv(path: &Path, rep: &EnergyReport) -> Result<()> {
    let mut out = String::from(
        "t,E,E_delta,viscous_dissipation,quartic_dissipation,beam_dissipation,\
         forcing_work_beam,forcing_work_fluid,penalty_residual\n",
    );
    for (i, &t) in rep.times.iter().enumerate() {
        out.push_str(&format!(
            "{t:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
            rep.energy[i],
            rep.energy_delta[i],
            rep.viscous_dissipation,
            rep.quartic_dissipation,
            rep.beam_dissipation,
            rep.forcing_work_beam,
            rep.forcing_work_fluid,
            rep.penalty_residual,
        ));
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn new(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageSummary {
    pub tag: String,
    pub eps: f64,
    pub delta: f64,
    pub m: usize,
    pub n_beam: usize,
    pub n_fluid: usize,
    pub omega: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_update: f64,
    pub min_rho: f64,
    pub sup_energy_delta: f64,
    pub viscous_dissipation: f64,
    pub quartic_dissipation: f64,
    pub beam_dissipation: f64,
    pub forcing_work_beam: f64,
    pub forcing_work_fluid: f64,
    pub penalty_residual: f64,
    pub balance_residual: f64,
    pub balance_scale: f64,
    pub mass_error: f64,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub stages: Vec<StageSummary>,
    /// penalty residual per stage, for the monotone-in-eps table
    pub penalty_table: Vec<(f64, f64)>,
    pub penalty_monotone: bool,
    pub all_converged: bool,
    pub all_checks_passed: bool,
    pub failure: Option<String>,
}

/// Per-stage equality checks: mass conservation and the energy balance
/// identity, both relative to the solver tolerance regime.
pub fn stage_checks(rep: &EnergyReport, mass: f64) -> Vec<CheckResult> {
    vec![
        CheckResult::new("mass_error", rep.mass_error, 1e-10 * mass),
        CheckResult::new(
            "balance_residual",
            rep.balance_residual.abs(),
            1e-8 * rep.balance_scale,
        ),
    ]
}

pub fn archive_from_state(
    config_json: &str,
    stage_tag: &str,
    stage: &Stage,
    state: &CoupledState,
) -> StateArchive {
    StateArchive {
        version: VERSION,
        config_json: config_json.to_string(),
        stage_tag: stage_tag.to_string(),
        eps: stage.eps,
        delta: stage.delta,
        m: stage.m,
        n_beam: stage.n_beam,
        n_fluid: stage.n_fluid,
        iterations: state.iterations,
        converged: state.converged,
        rho: state.rho.expansion.coeff.clone(),
        u: state.u.coeff.clone(),
        eta: state.eta.eta.coeff.clone(),
        eta_t: state.eta.eta_t.coeff.clone(),
    }
}

/// Rebuild a live state from archived coefficients. The discretization is
/// reconstructed from the archived sizes and the embedded config's domain;
/// density collocation values are re-evaluated from the coefficients.
pub fn state_from_archive(arch: &StateArchive) -> Result<(RunConfig, Discretization, CoupledState)> {
    let cfg: RunConfig = serde_json::from_str(&arch.config_json)
        .context("embedded config echo does not parse: integrity error")?;
    crate::config::validate(&cfg)?;
    let domain = cfg.domain_spec()?;
    let disc = Discretization::new(domain, arch.m, arch.n_beam, arch.n_fluid)?;

    let mut u = pfsi::basis::field::FluidField::zeros(disc.fluid.clone(), disc.time.clone());
    if u.coeff.dim() != arch.u.dim() {
        bail!(
            "velocity coefficient shape {:?} does not match sizes in header {:?}: integrity error",
            arch.u.dim(),
            u.coeff.dim()
        );
    }
    u.coeff.assign(&arch.u);

    let mut eta = BeamState::zeros(disc.beam.clone(), disc.time.clone());
    if eta.eta.coeff.dim() != arch.eta.dim() || eta.eta_t.coeff.dim() != arch.eta_t.dim() {
        bail!("beam coefficient shape does not match sizes in header: integrity error");
    }
    eta.eta.coeff.assign(&arch.eta);
    eta.eta_t.coeff.assign(&arch.eta_t);

    let u_exp = u.to_expansion();
    let ddisc = DensityDiscretization::new(&domain, disc.rho_bands, &u_exp);
    let expansion = ScalarExpansion {
        fx: ddisc.fx.clone(),
        fz: ddisc.fz.clone(),
        ft: ddisc.ft.clone(),
        coeff: arch.rho.clone(),
    };
    if expansion.coeff.dim() != (ddisc.fx.dim(), ddisc.fz.dim(), ddisc.ft.dim()) {
        bail!(
            "density coefficient shape {:?} does not match sizes in header: integrity error",
            arch.rho.dim()
        );
    }
    let values = ddisc.grid.scalar_values(&expansion);
    let slice_weight = ddisc.grid.gx.weight() * ddisc.grid.gz.weight();
    let nt = ddisc.grid.gt.len();
    let mut slice_mass = vec![0.0; nt];
    for ((_, _, it), v) in values.indexed_iter() {
        slice_mass[it] += v * slice_weight;
    }
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    let rho = DensityField {
        expansion,
        values,
        grid: ddisc.grid,
        slice_mass,
        min_value,
        warnings: Vec::new(),
    };

    let state = CoupledState {
        min_rho: rho.min_value,
        rho,
        u,
        eta,
        iterations: arch.iterations,
        converged: arch.converged,
        update_history: Vec::new(),
    };
    Ok((cfg, disc, state))
}
