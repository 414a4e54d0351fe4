//! The coupled fixed-point map, stage iteration, and the continuation
//! schedule over (bases, penalty, artificial pressure).

use std::sync::Arc;

use crate::basis::{
    BeamBasis, BeamExpansion, BeamGrid, FluidBasis, FluidField, Fourier1d, Grid1d, TimeBasis,
    VectorExpansion, WorkGrid,
};
use crate::density::{solve_density, DensityField, DensitySolveOptions};
use crate::diagnostics::{self, DiagContext, EnergyReport};
use crate::error::{Error, Result};
use crate::fluid::{solve_fluid, FluidParams, FluidSolveOptions};
use crate::geometry::{trace_velocity, DomainSpec};
use crate::structure::{solve_structure, BeamState, PenaltyInput};

// ---------------------------------------------------------------------------
// Discretization bundle
// ---------------------------------------------------------------------------

/// All bases and quadrature grids for one stage, sized so that every product
/// appearing in the coupled forms (and in the energy-balance diagnostic) is
/// integrated exactly by the grids.
#[derive(Clone)]
pub struct Discretization {
    pub domain: DomainSpec,
    pub time: Arc<TimeBasis>,
    pub beam: Arc<BeamBasis>,
    pub fluid: Arc<FluidBasis>,
    /// harmonics retained for the density in (x, z, t)
    pub rho_bands: (usize, usize, usize),
    /// volumetric quadrature grid over Q_T
    pub quad: WorkGrid,
    /// interface quadrature grid over Γ_T
    pub beam_grid: BeamGrid,
}

impl Discretization {
    /// Build bases for `m` time harmonics, `n_beam` beam modes and `n_fluid`
    /// fluid modes. The density band doubles the velocity band so that
    /// quadratic velocity expressions lie inside the density test span; the
    /// volumetric grid resolves quintic density products so the balance
    /// diagnostics integrate them exactly in time and to high accuracy in
    /// space.
    pub fn new(domain: DomainSpec, m: usize, n_beam: usize, n_fluid: usize) -> Result<Self> {
        if m == 0 || n_beam == 0 || n_fluid < 2 {
            return Err(Error::Config(
                "need at least one time harmonic, one beam mode and two fluid modes".into(),
            ));
        }
        let time = Arc::new(TimeBasis::new(domain.period, m));
        let beam = Arc::new(BeamBasis::new(domain.length, n_beam));
        let fluid = Arc::new(FluidBasis::new(domain.length, domain.half_height, n_fluid));

        let kxu = fluid.fx().harmonics().max(1);
        let kzu = fluid.fz().harmonics().max(1);
        let rho_bands = (2 * kxu, 2 * kzu, 2 * m);

        let mk = |period: f64, band: usize| Grid1d::new(Fourier1d::new(period, band), 2 * band + 2);
        let quad = WorkGrid::new(
            mk(domain.length, 5 * kxu + 1),
            mk(2.0 * domain.half_height, 5 * kzu + 1),
            mk(domain.period, 11 * m + 1),
        );
        let kb = beam.fourier().harmonics().max(1);
        let beam_grid = BeamGrid::new(
            mk(domain.length, 2 * kb + kxu + 2),
            mk(domain.period, 4 * m + 2),
        );
        Ok(Self {
            domain,
            time,
            beam,
            fluid,
            rho_bands,
            quad,
            beam_grid,
        })
    }
}

// ---------------------------------------------------------------------------
// Forcing
// ---------------------------------------------------------------------------

/// One forcing contribution: `amplitude` times basis mode `space_mode` times
/// time mode `time_mode` (0 = constant, 2k−1 = sin k, 2k = cos k).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingMode {
    pub amplitude: f64,
    pub space_mode: usize,
    pub time_mode: usize,
}

/// Forcing described mode-by-mode so it is reproduced exactly in every
/// discretization that contains the named modes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForcingSpec {
    /// beam load f(t,x); space modes index the beam basis
    pub beam: Vec<ForcingMode>,
    /// body force F(t,x,z); space modes index the fluid basis
    pub fluid: Vec<ForcingMode>,
}

/// Forcing realized on a concrete discretization.
#[derive(Debug, Clone)]
pub struct Forcing {
    pub beam: BeamExpansion,
    pub fluid: VectorExpansion,
}

impl ForcingSpec {
    pub fn realize(&self, disc: &Discretization) -> Result<Forcing> {
        let ft = disc.time.fourier().clone();
        let mut beam = BeamExpansion::zeros(disc.beam.fourier().clone(), ft.clone());
        for mode in &self.beam {
            if mode.space_mode >= disc.beam.len() || mode.time_mode >= ft.dim() {
                return Err(Error::Config(format!(
                    "beam forcing mode (space {}, time {}) outside the discretization",
                    mode.space_mode, mode.time_mode
                )));
            }
            // beam basis member expressed in the trigonometric x-basis
            for (jx, &c) in disc
                .beam
                .coeff()
                .row(mode.space_mode)
                .iter()
                .enumerate()
            {
                beam.coeff[(jx, mode.time_mode)] += mode.amplitude * c;
            }
        }
        let mut fluid = VectorExpansion::zeros(
            disc.fluid.fx().clone(),
            disc.fluid.fz().clone(),
            ft.clone(),
        );
        for mode in &self.fluid {
            if mode.space_mode >= disc.fluid.len() || mode.time_mode >= ft.dim() {
                return Err(Error::Config(format!(
                    "fluid forcing mode (space {}, time {}) outside the discretization",
                    mode.space_mode, mode.time_mode
                )));
            }
            let fm = disc.fluid.modes()[mode.space_mode];
            fluid.coeff[(fm.comp, fm.jx, fm.jz, mode.time_mode)] += mode.amplitude;
        }
        Ok(Forcing { beam, fluid })
    }
}

// ---------------------------------------------------------------------------
// Physical parameters and stage parameters
// ---------------------------------------------------------------------------

/// Stage-independent physical parameters.
#[derive(Debug, Clone, Copy)]
pub struct PhysicalParams {
    pub gamma: f64,
    pub a_exp: f64,
    pub mu: f64,
    pub zeta: f64,
    /// total mass m₀
    pub mass: f64,
}

impl PhysicalParams {
    pub fn fluid_params(&self, domain: &DomainSpec, eps: f64, delta: f64) -> FluidParams {
        FluidParams {
            gamma: self.gamma,
            a_exp: self.a_exp,
            delta,
            eps,
            mu: self.mu,
            zeta: self.zeta,
            m_level: self.mass / domain.measure(),
        }
    }
}

/// Order in which the three sub-solves consume fresh versus lagged iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubSolveOrder {
    /// every sub-solve sees only the lagged iterate
    #[default]
    Lagged,
    /// the fluid solve sees the freshly updated displacement
    FreshStructure,
}

/// Iteration scheme applied on top of the coupled map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Acceleration {
    /// plain damped Picard: x ← (1−ω)x + ω𝒯(x)
    #[default]
    Relaxation,
    /// Anderson mixing over the given history depth with damping ω.
    /// Stabilizes real map multipliers above one, which plain relaxation
    /// cannot (|1−ω+ωg| > 1 for every ω ∈ (0,1] when g > 1).
    Anderson { depth: usize },
}

/// Parameters for one fixed-point stage.
#[derive(Debug, Clone, Copy)]
pub struct StageParams {
    pub eps: f64,
    pub delta: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// relaxation weight ω ∈ (0,1]; ω = 1 is the unrelaxed map
    pub omega: f64,
    pub order: SubSolveOrder,
    pub accel: Acceleration,
}

impl StageParams {
    pub fn new(eps: f64, delta: f64) -> Self {
        Self {
            eps,
            delta,
            tol: 1e-11,
            max_iters: 200,
            omega: 0.5,
            order: SubSolveOrder::Lagged,
            accel: Acceleration::Relaxation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.delta >= 0.0) {
            return Err(Error::Config("need eps > 0 and delta >= 0".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("stage tolerance must be positive".into()));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::Config("relaxation weight must lie in (0, 1]".into()));
        }
        if let Acceleration::Anderson { depth } = self.accel {
            if depth == 0 {
                return Err(Error::Config("Anderson depth must be at least 1".into()));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Coupled state
// ---------------------------------------------------------------------------

/// One iterate of the coupled map: density, velocity, displacement, and the
/// iteration metadata accumulated by the driver.
#[derive(Debug, Clone)]
pub struct CoupledState {
    pub rho: DensityField,
    pub u: FluidField,
    pub eta: BeamState,
    pub iterations: usize,
    pub converged: bool,
    /// normalized update magnitude after each iteration
    pub update_history: Vec<f64>,
    pub min_rho: f64,
}

/// ‖η‖²_{L²(0,T;H²)} from coefficients (the beam basis is H²-orthonormal).
fn beam_h2_norm_sq(f: &crate::basis::BeamField) -> f64 {
    let mut s = 0.0;
    for i in 0..f.basis.len() {
        for j in 0..f.time.dim() {
            s += f.coeff[(i, j)].powi(2) * f.time.gram(j);
        }
    }
    s
}

/// Quiescent state with the exact constant-density field for total mass
/// `mass` at damping `eps`.
pub fn quiescent_state(
    disc: &Discretization,
    phys: &PhysicalParams,
    eps: f64,
) -> Result<CoupledState> {
    let u = FluidField::zeros(disc.fluid.clone(), disc.time.clone());
    let rho = solve_density(
        &u.to_expansion(),
        &disc.domain,
        disc.rho_bands,
        &DensitySolveOptions::new(eps, phys.mass),
    )?;
    Ok(CoupledState {
        min_rho: rho.min_value,
        rho,
        u,
        eta: BeamState::zeros(disc.beam.clone(), disc.time.clone()),
        iterations: 0,
        converged: false,
        update_history: Vec::new(),
    })
}

/// Carry a state onto a (possibly larger) discretization. Basis members are
/// stable prefixes under growth in every direction, so coefficients embed by
/// index.
pub fn embed_state(
    state: &CoupledState,
    disc: &Discretization,
    phys: &PhysicalParams,
    eps: f64,
) -> Result<CoupledState> {
    let mut u = FluidField::zeros(disc.fluid.clone(), disc.time.clone());
    let (n_old, mt_old) = state.u.coeff.dim();
    if n_old > disc.fluid.len() || mt_old > disc.time.dim() {
        return Err(Error::Config(
            "cannot embed a state into a smaller discretization".into(),
        ));
    }
    for i in 0..n_old {
        for j in 0..mt_old {
            u.coeff[(i, j)] = state.u.coeff[(i, j)];
        }
    }
    let mut eta = BeamState::zeros(disc.beam.clone(), disc.time.clone());
    let (nb_old, _) = state.eta.eta.coeff.dim();
    if nb_old > disc.beam.len() {
        return Err(Error::Config(
            "cannot embed a state into a smaller discretization".into(),
        ));
    }
    for i in 0..nb_old {
        for j in 0..mt_old {
            eta.eta.coeff[(i, j)] = state.eta.eta.coeff[(i, j)];
            eta.eta_t.coeff[(i, j)] = state.eta.eta_t.coeff[(i, j)];
        }
    }
    let rho = solve_density(
        &u.to_expansion(),
        &disc.domain,
        disc.rho_bands,
        &DensitySolveOptions::new(eps, phys.mass),
    )?;
    Ok(CoupledState {
        min_rho: rho.min_value,
        rho,
        u,
        eta,
        iterations: 0,
        converged: false,
        update_history: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Fixed-point map
// ---------------------------------------------------------------------------

/// One application of the coupled map with relaxation: density from the
/// lagged velocity, displacement from the penalized trace problem, velocity
/// from the momentum problem; then the velocity/displacement pair is relaxed
/// toward the new values with weight ω.
pub fn fixed_point_step(
    state: &CoupledState,
    disc: &Discretization,
    phys: &PhysicalParams,
    forcing: &Forcing,
    stage: &StageParams,
) -> Result<CoupledState> {
    stage.validate()?;
    let out = apply_coupled_map(state, disc, phys, forcing, stage)?;

    // relaxation toward the new pair
    let mut u = state.u.clone();
    u.scale(1.0 - stage.omega);
    u.scaled_add(stage.omega, &out.u_new);
    let mut eta = state.eta.clone();
    eta.eta.scale(1.0 - stage.omega);
    eta.eta.scaled_add(stage.omega, &out.eta_new.eta);
    eta.eta_t.scale(1.0 - stage.omega);
    eta.eta_t.scaled_add(stage.omega, &out.eta_new.eta_t);

    Ok(CoupledState {
        min_rho: out.rho.min_value,
        rho: out.rho,
        u,
        eta,
        iterations: state.iterations + 1,
        converged: false,
        update_history: state.update_history.clone(),
    })
}

/// Unrelaxed output of one application of the coupled map.
pub struct MapOutput {
    pub rho: DensityField,
    pub u_new: FluidField,
    pub eta_new: BeamState,
}

/// One unrelaxed application of the coupled map 𝒯 at the given iterate.
pub fn apply_coupled_map(
    state: &CoupledState,
    disc: &Discretization,
    phys: &PhysicalParams,
    forcing: &Forcing,
    stage: &StageParams,
) -> Result<MapOutput> {
    let u_lag = &state.u;
    let eta_lag = &state.eta;
    let u_exp = u_lag.to_expansion();

    let rho = solve_density(
        &u_exp,
        &disc.domain,
        disc.rho_bands,
        &DensitySolveOptions::new(stage.eps, phys.mass),
    )
    .map_err(|e| e.in_stage("density"))?;

    let trace = trace_velocity(
        &u_exp,
        &eta_lag.eta.to_expansion(),
        disc.domain.half_height,
        &disc.beam_grid,
    )
    .map_err(|e| e.in_stage("trace"))?;
    let eta_new = solve_structure(
        &PenaltyInput {
            v_e2: trace.component(1),
            f: disc.beam_grid.values(&forcing.beam),
            eps: stage.eps,
        },
        disc.beam.clone(),
        disc.time.clone(),
        &disc.beam_grid,
    )
    .map_err(|e| e.in_stage("structure"))?;

    let eta_for_fluid = match stage.order {
        SubSolveOrder::Lagged => eta_lag,
        SubSolveOrder::FreshStructure => &eta_new,
    };
    let u_new = solve_fluid(
        disc.fluid.clone(),
        disc.time.clone(),
        &disc.quad,
        &disc.beam_grid,
        disc.domain.half_height,
        &rho.expansion,
        u_lag,
        eta_for_fluid,
        &forcing.fluid,
        phys.fluid_params(&disc.domain, stage.eps, stage.delta),
        &FluidSolveOptions::default(),
    )
    .map_err(|e| e.in_stage("fluid"))?;

    Ok(MapOutput { rho, u_new, eta_new })
}

/// Normalized update magnitude between consecutive iterates:
/// (‖Δu‖ + ‖Δρ‖ + ‖Δη‖_{L²H²}) / (‖state‖ + 1).
pub fn update_metric(old: &CoupledState, new: &CoupledState) -> f64 {
    let mut du = new.u.clone();
    du.scaled_add(-1.0, &old.u);
    let mut drho = new.rho.expansion.clone();
    drho.coeff -= &old.rho.expansion.coeff;
    let mut deta = new.eta.eta.clone();
    deta.scaled_add(-1.0, &old.eta.eta);
    let change = du.norm_l2_sq().sqrt() + drho.norm_l2_sq().sqrt() + beam_h2_norm_sq(&deta).sqrt();
    let magnitude = new.u.norm_l2_sq().sqrt()
        + new.rho.expansion.norm_l2_sq().sqrt()
        + beam_h2_norm_sq(&new.eta.eta).sqrt();
    change / (magnitude + 1.0)
}

/// Iterate the fixed-point map until the update metric drops below the stage
/// tolerance. Running out of iterations is non-fatal: the state is returned
/// flagged unconverged with its full update history.
pub fn run_stage(
    initial: CoupledState,
    disc: &Discretization,
    phys: &PhysicalParams,
    forcing: &Forcing,
    stage: &StageParams,
) -> Result<CoupledState> {
    stage.validate()?;
    let mut state = initial;
    state.update_history.clear();
    state.iterations = 0;
    if let Acceleration::Anderson { depth } = stage.accel {
        return run_stage_anderson(state, disc, phys, forcing, stage, depth);
    }
    for _ in 0..stage.max_iters {
        let mut next = fixed_point_step(&state, disc, phys, forcing, stage)?;
        let metric = update_metric(&state, &next);
        next.update_history.push(metric);
        state = next;
        if metric <= stage.tol {
            state.converged = true;
            return Ok(state);
        }
    }
    state.converged = false;
    Ok(state)
}

fn flatten_pair(u: &FluidField, eta: &BeamState) -> nalgebra::DVector<f64> {
    let n = u.coeff.len() + eta.eta.coeff.len() + eta.eta_t.coeff.len();
    let mut v = nalgebra::DVector::zeros(n);
    let mut k = 0;
    for &c in u.coeff.iter() {
        v[k] = c;
        k += 1;
    }
    for &c in eta.eta.coeff.iter() {
        v[k] = c;
        k += 1;
    }
    for &c in eta.eta_t.coeff.iter() {
        v[k] = c;
        k += 1;
    }
    v
}

fn unflatten_pair(v: &nalgebra::DVector<f64>, u: &mut FluidField, eta: &mut BeamState) {
    let mut k = 0;
    for c in u.coeff.iter_mut() {
        *c = v[k];
        k += 1;
    }
    for c in eta.eta.coeff.iter_mut() {
        *c = v[k];
        k += 1;
    }
    for c in eta.eta_t.coeff.iter_mut() {
        *c = v[k];
        k += 1;
    }
}

/// Anderson-accelerated stage loop on the (u, η, η_t) coefficient vector.
/// The density is not part of the mixing vector: each map application
/// re-solves it from the current velocity, so it stays slaved to x.
fn run_stage_anderson(
    initial: CoupledState,
    disc: &Discretization,
    phys: &PhysicalParams,
    forcing: &Forcing,
    stage: &StageParams,
    depth: usize,
) -> Result<CoupledState> {
    let mut state = initial;
    let mut x = flatten_pair(&state.u, &state.eta);
    let mut hist_dx: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut hist_df: Vec<nalgebra::DVector<f64>> = Vec::new();
    let mut prev: Option<(nalgebra::DVector<f64>, nalgebra::DVector<f64>)> = None;
    let mut last_good: Option<nalgebra::DVector<f64>> = None;
    let beta = stage.omega;

    for it in 0..stage.max_iters {
        unflatten_pair(&x, &mut state.u, &mut state.eta);
        let out = match apply_coupled_map(&state, disc, phys, forcing, stage) {
            Ok(out) => out,
            Err(e) => {
                // an extrapolated iterate left the solvable region; backtrack
                // toward the last successfully evaluated point
                let Some(good) = &last_good else {
                    return Err(e);
                };
                let mut shrunken = None;
                for _ in 0..12 {
                    x = 0.5 * (&x + good);
                    unflatten_pair(&x, &mut state.u, &mut state.eta);
                    if let Ok(out) = apply_coupled_map(&state, disc, phys, forcing, stage) {
                        shrunken = Some(out);
                        break;
                    }
                }
                let Some(out) = shrunken else {
                    return Err(e);
                };
                // extrapolation history led here; start it afresh
                hist_dx.clear();
                hist_df.clear();
                prev = None;
                out
            }
        };
        last_good = Some(x.clone());
        state.rho = out.rho;
        state.min_rho = state.rho.min_value;
        state.iterations = it + 1;

        let g = flatten_pair(&out.u_new, &out.eta_new);
        let f = &g - &x;
        let metric = f.norm() / (x.norm() + 1.0);
        state.update_history.push(metric);
        if metric <= stage.tol {
            // adopt the map output: it is at least as close to the fixed point
            unflatten_pair(&g, &mut state.u, &mut state.eta);
            state.converged = true;
            return Ok(state);
        }

        if let Some((x_prev, f_prev)) = &prev {
            hist_dx.push(&x - x_prev);
            hist_df.push(&f - f_prev);
            if hist_dx.len() > depth {
                hist_dx.remove(0);
                hist_df.remove(0);
            }
        }

        let m = hist_df.len();
        let x_next = if m == 0 {
            &x + beta * &f
        } else {
            // least squares: minimize ‖f − DF·γ‖ over the history window
            let dim = x.len();
            let mut df = nalgebra::DMatrix::zeros(dim, m);
            for (j, col) in hist_df.iter().enumerate() {
                df.set_column(j, col);
            }
            let svd = df.clone().svd(true, true);
            let gamma = svd
                .solve(&f, 1e-12 * svd.singular_values.max())
                .map_err(|e| Error::Config(format!("Anderson least squares failed: {e}")))?;
            let mut xn = &x + beta * &f;
            for j in 0..m {
                xn -= gamma[j] * (&hist_dx[j] + beta * &hist_df[j]);
            }
            xn
        };

        prev = Some((x.clone(), f));
        x = x_next;
    }
    unflatten_pair(&x, &mut state.u, &mut state.eta);
    state.converged = false;
    Ok(state)
}

// ---------------------------------------------------------------------------
// Continuation
// ---------------------------------------------------------------------------

/// One continuation stage: discretization sizes plus (ε, δ) and tolerances.
#[derive(Debug, Clone, Copy)]
pub struct Stage {
    pub m: usize,
    pub n_beam: usize,
    pub n_fluid: usize,
    pub eps: f64,
    pub delta: f64,
    pub tol: f64,
    pub max_iters: usize,
    /// Per-stage relaxation weight; falls back to the schedule's `omega`.
    pub omega: Option<f64>,
    pub accel: Acceleration,
}

/// Relaxation weight that keeps the coupled map contractive at the given
/// penalty strength. The density-momentum loop amplifies the time-mean
/// divergence like 1/ε, so the weight must shrink proportionally with ε.
pub fn suggested_omega(eps: f64) -> f64 {
    (10.0 * eps).min(0.5)
}

/// Ordered stages with strictly decreasing (ε, δ) and nondecreasing bases.
#[derive(Debug, Clone)]
pub struct ContinuationSchedule {
    pub stages: Vec<Stage>,
    pub omega: f64,
    pub order: SubSolveOrder,
}

impl ContinuationSchedule {
    /// Three stages holding the bases fixed while (ε, δ) decrease one decade
    /// per stage from 1e−1 to 1e−3.
    pub fn default_for(m: usize, n_beam: usize, n_fluid: usize) -> Self {
        let stages = (0..3)
            .map(|k| Stage {
                m,
                n_beam,
                n_fluid,
                eps: 10f64.powi(-(k as i32) - 1),
                delta: 10f64.powi(-(k as i32) - 1),
                tol: 1e-11,
                max_iters: 4000,
                // under Anderson mixing the backtracking line search makes a
                // larger base step safe even at small eps, where the plain
                // map would require omega ~ eps
                omega: Some(suggested_omega(10f64.powi(-(k as i32) - 1)).max(0.05)),
                accel: Acceleration::Anderson { depth: 8 },
            })
            .collect();
        Self {
            stages,
            omega: 0.5,
            order: SubSolveOrder::Lagged,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("continuation schedule has no stages".into()));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return Err(Error::Config("relaxation weight must lie in (0, 1]".into()));
        }
        for w in self.stages.windows(2) {
            if !(w[1].eps < w[0].eps && w[1].delta < w[0].delta) {
                return Err(Error::Config(
                    "eps and delta must strictly decrease across stages".into(),
                ));
            }
            if w[1].m < w[0].m || w[1].n_beam < w[0].n_beam || w[1].n_fluid < w[0].n_fluid {
                return Err(Error::Config(
                    "basis sizes must be nondecreasing across stages".into(),
                ));
            }
        }
        for s in &self.stages {
            StageParams {
                eps: s.eps,
                delta: s.delta,
                tol: s.tol,
                max_iters: s.max_iters,
                omega: s.omega.unwrap_or(self.omega),
                order: self.order,
                accel: s.accel,
            }
            .validate()?;
        }
        Ok(())
    }
}

/// Output of one completed continuation stage.
pub struct StageOutput {
    pub stage: Stage,
    pub disc: Discretization,
    pub state: CoupledState,
    pub report: EnergyReport,
}

/// Result of a continuation run: completed stages, plus the error that
/// stopped the schedule early, if any.
pub struct ContinuationOutcome {
    pub stages: Vec<StageOutput>,
    pub failure: Option<Error>,
}

/// Execute the schedule in order with warm starts. A stage solver failure
/// halts the schedule; completed stages are still returned.
pub fn run_continuation(
    schedule: &ContinuationSchedule,
    domain: DomainSpec,
    phys: &PhysicalParams,
    forcing_spec: &ForcingSpec,
) -> Result<ContinuationOutcome> {
    schedule.validate()?;
    let mut outputs: Vec<StageOutput> = Vec::new();
    let mut failure = None;
    for s in &schedule.stages {
        let step = || -> Result<StageOutput> {
            let disc = Discretization::new(domain, s.m, s.n_beam, s.n_fluid)?;
            let forcing = forcing_spec.realize(&disc)?;
            let initial = match outputs.last() {
                Some(prev) => embed_state(&prev.state, &disc, phys, s.eps)?,
                None => quiescent_state(&disc, phys, s.eps)?,
            };
            let params = StageParams {
                eps: s.eps,
                delta: s.delta,
                tol: s.tol,
                max_iters: s.max_iters,
                omega: s.omega.unwrap_or(schedule.omega),
                order: schedule.order,
                accel: s.accel,
            };
            let state = run_stage(initial, &disc, phys, &forcing, &params)?;
            let ctx = DiagContext {
                disc: &disc,
                params: phys.fluid_params(&disc.domain, s.eps, s.delta),
                mass: phys.mass,
                forcing: &forcing,
            };
            let report = diagnostics::energy(&state, &ctx)?;
            Ok(StageOutput {
                stage: *s,
                disc,
                state,
                report,
            })
        };
        match step() {
            Ok(out) => outputs.push(out),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    Ok(ContinuationOutcome {
        stages: outputs,
        failure,
    })
}
