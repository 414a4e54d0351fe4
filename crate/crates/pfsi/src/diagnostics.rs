//! Energy functionals, balance residuals, penalty residual, and weak-form
//! residuals against coupled test pairs — all read-only over a state.

use ndarray::{Array2, Array3};

use crate::basis::{BeamGrid, Deriv, Fourier1d, Grid1d, VectorExpansion, WorkGrid};
use crate::density::{continuity_residual, ContinuityResidual};
use crate::driver::{CoupledState, Discretization, Forcing};
use crate::error::{Error, Result};
use crate::fluid::{assemble_viscous_form, FluidParams};
use crate::geometry::trace_velocity;

/// Everything the diagnostics need besides the state itself.
pub struct DiagContext<'a> {
    pub disc: &'a Discretization,
    pub params: FluidParams,
    /// total mass m₀
    pub mass: f64,
    pub forcing: &'a Forcing,
}

/// Time series of the energies plus all scalar functionals of one state.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    /// quadrature time nodes
    pub times: Vec<f64>,
    /// physical energy E(t)
    pub energy: Vec<f64>,
    /// augmented energy E_δ(t): E plus the δ-terms
    pub energy_delta: Vec<f64>,
    /// ∫ S(∇u):∇u over Q_T
    pub viscous_dissipation: f64,
    /// δ ∫ |u|⁴ over Q_T
    pub quartic_dissipation: f64,
    /// ∫ |η_tx|² over Γ_T
    pub beam_dissipation: f64,
    /// ∫ f η_t over Γ_T
    pub forcing_work_beam: f64,
    /// ∫ ρ u·F over Q_T
    pub forcing_work_fluid: f64,
    /// ∫ |v − η_t e₂|² over Γ_T
    pub penalty_residual: f64,
    /// LHS − RHS of the balance identity with unit weight
    pub balance_residual: f64,
    pub balance_scale: f64,
    /// sup over time nodes of E_δ(t)
    pub sup_energy_delta: f64,
    /// max over time nodes of |∫ρ(t) − m₀|
    pub mass_error: f64,
}

/// Outcome of one balance evaluation.
#[derive(Debug, Clone)]
pub struct BalanceReport {
    pub lhs: f64,
    pub rhs: f64,
    /// LHS − RHS (two-sided check)
    pub residual: f64,
    /// max(0, LHS − RHS) (one-sided, inequality mode)
    pub defect: f64,
    pub scale: f64,
    pub warning: Option<String>,
}

/// Residual of the coupled momentum form against one admissible test pair.
#[derive(Debug, Clone, Copy)]
pub struct PairResidual {
    /// terms of the limit weak form only
    pub physical: f64,
    /// δ- and ε-terms of the approximate form
    pub artificial: f64,
    /// penalty terms of both equations (cancel for admissible pairs)
    pub penalty: f64,
    pub total: f64,
}

/// Per-pair residuals plus the continuity residual of the same state.
#[derive(Debug, Clone)]
pub struct WeakResidualReport {
    pub pairs: Vec<PairResidual>,
    pub max_physical: f64,
    pub max_total: f64,
    /// max over interface nodes of |φ(t,x,η̂) − ψ e₂|
    pub constraint_defect: f64,
    pub continuity: ContinuityResidual,
}

fn pow_pos(r: f64, p: f64) -> f64 {
    if r > 0.0 {
        r.powf(p)
    } else {
        0.0
    }
}

/// Grid values of a scalar weight of time on each time node.
fn time_weight(f: &Fourier1d, coeff: &[f64], nodes: &[f64]) -> Vec<f64> {
    nodes.iter().map(|&t| f.eval_series(coeff, t)).collect()
}

struct FieldValues {
    rho: Array3<f64>,
    rho_x: Array3<f64>,
    rho_z: Array3<f64>,
    u: [Array3<f64>; 2],
    // g[a][b] = ∂_a u_b
    g: [[Array3<f64>; 2]; 2],
}

fn field_values(state: &CoupledState, quad: &WorkGrid) -> FieldValues {
    let u_exp = state.u.to_expansion();
    let comp = |e: &VectorExpansion, c: usize| quad.scalar_values(&e.component(c));
    let ux = u_exp.differentiate(Deriv::X);
    let uz = u_exp.differentiate(Deriv::Z);
    FieldValues {
        rho: quad.scalar_values(&state.rho.expansion),
        rho_x: quad.scalar_values(&state.rho.expansion.differentiate(Deriv::X)),
        rho_z: quad.scalar_values(&state.rho.expansion.differentiate(Deriv::Z)),
        u: [comp(&u_exp, 0), comp(&u_exp, 1)],
        g: [
            [comp(&ux, 0), comp(&ux, 1)],
            [comp(&uz, 0), comp(&uz, 1)],
        ],
    }
}

/// S(∇u):∇u pointwise from the velocity gradient.
fn viscous_density(fv: &FieldValues, mu: f64, zeta: f64) -> Array3<f64> {
    let div = &fv.g[0][0] + &fv.g[1][1];
    let mut out = Array3::zeros(fv.rho.raw_dim());
    for a in 0..2 {
        for b in 0..2 {
            out += &(mu * (&fv.g[a][b] * &fv.g[a][b] + &fv.g[a][b] * &fv.g[b][a]));
        }
    }
    out + (zeta - mu) * &div * &div
}

/// Interface values needed by the energy functionals: η_t and the trace gap
/// components on the interface grid, η_t and η_xx on (x, quad-time) nodes.
struct BeamValues {
    /// on the interface grid (x, t)
    eta_t: Array2<f64>,
    gap0: Array2<f64>,
    gap1: Array2<f64>,
    /// on beam-x × volumetric-time nodes
    eta_t_q: Array2<f64>,
    eta_xx_q: Array2<f64>,
}

fn beam_values(state: &CoupledState, disc: &Discretization) -> Result<BeamValues> {
    let bg = &disc.beam_grid;
    let eta_exp = state.eta.eta.to_expansion();
    let eta_t_exp = state.eta.eta_t.to_expansion();
    let eta_t = bg.values(&eta_t_exp);
    let tr = trace_velocity(
        &state.u.to_expansion(),
        &eta_exp,
        disc.domain.half_height,
        bg,
    )?;
    let gap0 = tr.component(0);
    let gap1 = &tr.component(1) - &eta_t;
    let bq = BeamGrid::new(bg.gx.clone(), disc.quad.gt.clone());
    let eta_t_q = bq.values(&eta_t_exp);
    let eta_xx_q = bq.values(&eta_exp.differentiate(Deriv::Xx)?);
    Ok(BeamValues {
        eta_t,
        gap0,
        gap1,
        eta_t_q,
        eta_xx_q,
    })
}

/// ∫_{Γ_T} |v − η_t e₂|² with v the trace of u on the displaced interface.
pub fn penalty_residual(state: &CoupledState, ctx: &DiagContext) -> Result<f64> {
    let bv = beam_values(state, ctx.disc)?;
    let bg = &ctx.disc.beam_grid;
    Ok(bg.inner(&bv.gap0, &bv.gap0) + bg.inner(&bv.gap1, &bv.gap1))
}

/// All energy functionals of one state.
pub fn energy(state: &CoupledState, ctx: &DiagContext) -> Result<EnergyReport> {
    let disc = ctx.disc;
    let q = &disc.quad;
    let p = &ctx.params;
    let fv = field_values(state, q);
    let bv = beam_values(state, disc)?;
    let (nx, nz, nt) = q.shape();
    let w_xz = q.gx.weight() * q.gz.weight();
    let w_bx = disc.beam_grid.gx.weight();

    let mut energy = Vec::with_capacity(nt);
    let mut energy_delta = Vec::with_capacity(nt);
    let mut mass_error: f64 = 0.0;
    for k in 0..nt {
        let mut e_phys = 0.0;
        let mut e_art = 0.0;
        let mut slice_mass = 0.0;
        for i in 0..nx {
            for j in 0..nz {
                let r = fv.rho[(i, j, k)];
                let uu = fv.u[0][(i, j, k)].powi(2) + fv.u[1][(i, j, k)].powi(2);
                e_phys += 0.5 * r * uu + pow_pos(r, p.gamma) / (p.gamma - 1.0);
                e_art += 0.5 * p.delta * uu + p.delta * pow_pos(r, p.a_exp) / (p.a_exp - 1.0);
                slice_mass += r;
            }
        }
        e_phys *= w_xz;
        e_art *= w_xz;
        mass_error = mass_error.max((slice_mass * w_xz - ctx.mass).abs());
        let mut e_beam = 0.0;
        for i in 0..bv.eta_t_q.nrows() {
            e_beam += 0.5 * bv.eta_t_q[(i, k)].powi(2) + 0.5 * bv.eta_xx_q[(i, k)].powi(2);
        }
        e_beam *= w_bx;
        energy.push(e_phys + e_beam);
        energy_delta.push(e_phys + e_beam + e_art);
    }

    // exact dissipation integrals from coefficients
    let v = assemble_viscous_form(&disc.fluid, p.mu, p.zeta);
    let mut viscous_dissipation = 0.0;
    for j in 0..disc.time.dim() {
        let col = state.u.coeff.column(j);
        let mut s = 0.0;
        for i in 0..disc.fluid.len() {
            for k in 0..disc.fluid.len() {
                s += col[i] * v[(i, k)] * col[k];
            }
        }
        viscous_dissipation += s * disc.time.gram(j);
    }
    let a1 = disc.beam.gram_deriv(1);
    let mut beam_dissipation = 0.0;
    for j in 0..disc.time.dim() {
        let col = state.eta.eta_t.coeff.column(j);
        let mut s = 0.0;
        for i in 0..disc.beam.len() {
            for k in 0..disc.beam.len() {
                s += col[i] * a1[(i, k)] * col[k];
            }
        }
        beam_dissipation += s * disc.time.gram(j);
    }

    let uu = &fv.u[0] * &fv.u[0] + &fv.u[1] * &fv.u[1];
    let quartic_dissipation = p.delta * q.integrate(&(&uu * &uu));

    let bg = &disc.beam_grid;
    let f_vals = bg.values(&ctx.forcing.beam);
    let forcing_work_beam = bg.inner(&f_vals, &bv.eta_t);
    let fq = q.vector_values(&ctx.forcing.fluid);
    let u_dot_f = &fv.u[0] * &fq.index_axis(ndarray::Axis(0), 0)
        + &fv.u[1] * &fq.index_axis(ndarray::Axis(0), 1);
    let forcing_work_fluid = q.integrate(&(&fv.rho * &u_dot_f));

    let penalty = bg.inner(&bv.gap0, &bv.gap0) + bg.inner(&bv.gap1, &bv.gap1);
    let balance = energy_balance(state, ctx, &[1.0])?;
    let sup_energy_delta = energy_delta.iter().cloned().fold(f64::MIN, f64::max);

    Ok(EnergyReport {
        times: q.gt.nodes().to_vec(),
        energy,
        energy_delta,
        viscous_dissipation,
        quartic_dissipation,
        beam_dissipation,
        forcing_work_beam,
        forcing_work_fluid,
        penalty_residual: penalty,
        balance_residual: balance.residual,
        balance_scale: balance.scale,
        sup_energy_delta,
        mass_error,
    })
}

/// Evaluate the balance identity with a smooth periodic time weight given by
/// its coefficients in the trigonometric time basis (index 0 = constant,
/// odd = sin, even = cos). For a converged stage and unit weight, LHS = RHS
/// up to solver tolerance; a weight outside the state's time span is allowed
/// but flagged, since the identity is then not guaranteed.
pub fn energy_balance(state: &CoupledState, ctx: &DiagContext, phi: &[f64]) -> Result<BalanceReport> {
    if phi.is_empty() || phi.len() % 2 == 0 {
        return Err(Error::Config(
            "time weight needs an odd number of coefficients (constant, then sin/cos pairs)"
                .into(),
        ));
    }
    let disc = ctx.disc;
    let p = &ctx.params;
    let band = (phi.len() - 1) / 2;
    let warning = if band > disc.time.m() {
        Some(format!(
            "weight band {} exceeds the state's time band {}; identity not guaranteed",
            band,
            disc.time.m()
        ))
    } else {
        None
    };
    let f_phi = Fourier1d::new(disc.domain.period, band);
    let dphi_coeff = f_phi.differentiate(phi);

    let q = &disc.quad;
    let bg = &disc.beam_grid;
    let phi_q = time_weight(&f_phi, phi, q.gt.nodes());
    let dphi_q = time_weight(&f_phi, &dphi_coeff, q.gt.nodes());
    let phi_b = time_weight(&f_phi, phi, bg.gt.nodes());

    let fv = field_values(state, q);
    let bv = beam_values(state, disc)?;
    let (nx, nz, nt) = q.shape();
    let w_q = q.cell_weight();
    let w_b = bg.cell_weight();
    let w_bx = bg.gx.weight();
    let w_xz = q.gx.weight() * q.gz.weight();

    let svisc = viscous_density(&fv, p.mu, p.zeta);
    let big_m = p.m_level;
    let eps = p.eps;
    let delta = p.delta;
    let gamma = p.gamma;
    let a = p.a_exp;

    let mut lhs = 0.0;
    let mut rhs = 0.0;

    // volumetric terms
    let fq = q.vector_values(&ctx.forcing.fluid);
    for k in 0..nt {
        let (pk, dpk) = (phi_q[k], dphi_q[k]);
        let mut e_delta_slice = 0.0;
        for i in 0..nx {
            for j in 0..nz {
                let r = fv.rho[(i, j, k)];
                let u0 = fv.u[0][(i, j, k)];
                let u1 = fv.u[1][(i, j, k)];
                let uu = u0 * u0 + u1 * u1;
                let grad_r2 = fv.rho_x[(i, j, k)].powi(2) + fv.rho_z[(i, j, k)].powi(2);
                e_delta_slice += 0.5 * r * uu
                    + pow_pos(r, gamma) / (gamma - 1.0)
                    + 0.5 * delta * uu
                    + delta * pow_pos(r, a) / (a - 1.0);
                lhs += w_q
                    * pk
                    * (svisc[(i, j, k)]
                        + delta * uu * uu
                        + eps * gamma * pow_pos(r, gamma - 2.0) * grad_r2
                        + eps * gamma / (gamma - 1.0) * pow_pos(r, gamma)
                        + eps * delta * a * pow_pos(r, a - 2.0) * grad_r2
                        + eps * delta * a / (a - 1.0) * pow_pos(r, a));
                let udotf =
                    u0 * fq[(0, i, j, k)] + u1 * fq[(1, i, j, k)];
                rhs += w_q
                    * pk
                    * (r * udotf
                        + eps * big_m * gamma / (gamma - 1.0) * pow_pos(r, gamma - 1.0)
                        + eps * delta * big_m * a / (a - 1.0) * pow_pos(r, a - 1.0));
            }
        }
        // −∫ φ' E_δ : fluid part on the volumetric grid
        lhs -= dpk * e_delta_slice * w_xz * q.gt.weight();
        // −∫ φ' E_δ : interface part, same time nodes
        let mut e_beam = 0.0;
        for i in 0..bv.eta_t_q.nrows() {
            e_beam += 0.5 * bv.eta_t_q[(i, k)].powi(2) + 0.5 * bv.eta_xx_q[(i, k)].powi(2);
        }
        lhs -= dpk * e_beam * w_bx * q.gt.weight();
    }

    // interface terms
    let eta_tx = bg.values(&state.eta.eta_t.to_expansion().differentiate(Deriv::X)?);
    let f_vals = bg.values(&ctx.forcing.beam);
    let (nbx, nbt) = bg.shape();
    for k in 0..nbt {
        let pk = phi_b[k];
        for i in 0..nbx {
            lhs += w_b
                * pk
                * (eta_tx[(i, k)].powi(2)
                    + (bv.gap0[(i, k)].powi(2) + bv.gap1[(i, k)].powi(2)) / eps);
            rhs += w_b * pk * f_vals[(i, k)] * bv.eta_t[(i, k)];
        }
    }

    let residual = lhs - rhs;
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    Ok(BalanceReport {
        lhs,
        rhs,
        residual,
        defect: residual.max(0.0),
        scale,
        warning,
    })
}

/// Balance of the physical terms only, dropping every ε- and δ-term and the
/// penalty contribution: LHS = −∫φ′E + ∫φ S(∇u):∇u + ∫φ|η_tx|², RHS = the
/// forcing work. At a finite approximation level this is an inequality
/// (LHS ≤ RHS up to the discarded nonnegative sources), so the meaningful
/// quantity is the one-sided defect max(0, LHS − RHS).
pub fn physical_balance(
    state: &CoupledState,
    ctx: &DiagContext,
    phi: &[f64],
) -> Result<BalanceReport> {
    if phi.is_empty() || phi.len() % 2 == 0 {
        return Err(Error::Config(
            "time weight needs an odd number of coefficients (constant, then sin/cos pairs)"
                .into(),
        ));
    }
    let disc = ctx.disc;
    let p = &ctx.params;
    let band = (phi.len() - 1) / 2;
    let warning = if band > disc.time.m() {
        Some(format!(
            "weight band {} exceeds the state's time band {}; identity not guaranteed",
            band,
            disc.time.m()
        ))
    } else {
        None
    };
    let f_phi = Fourier1d::new(disc.domain.period, band);
    let dphi_coeff = f_phi.differentiate(phi);

    let q = &disc.quad;
    let bg = &disc.beam_grid;
    let phi_q = time_weight(&f_phi, phi, q.gt.nodes());
    let dphi_q = time_weight(&f_phi, &dphi_coeff, q.gt.nodes());
    let phi_b = time_weight(&f_phi, phi, bg.gt.nodes());

    let fv = field_values(state, q);
    let bv = beam_values(state, disc)?;
    let (nx, nz, nt) = q.shape();
    let w_q = q.cell_weight();
    let w_b = bg.cell_weight();
    let w_bx = bg.gx.weight();
    let w_xz = q.gx.weight() * q.gz.weight();

    let svisc = viscous_density(&fv, p.mu, p.zeta);
    let gamma = p.gamma;

    let mut lhs = 0.0;
    let mut rhs = 0.0;

    let fq = q.vector_values(&ctx.forcing.fluid);
    for k in 0..nt {
        let (pk, dpk) = (phi_q[k], dphi_q[k]);
        let mut e_slice = 0.0;
        for i in 0..nx {
            for j in 0..nz {
                let r = fv.rho[(i, j, k)];
                let u0 = fv.u[0][(i, j, k)];
                let u1 = fv.u[1][(i, j, k)];
                let uu = u0 * u0 + u1 * u1;
                e_slice += 0.5 * r * uu + pow_pos(r, gamma) / (gamma - 1.0);
                lhs += w_q * pk * svisc[(i, j, k)];
                let udotf = u0 * fq[(0, i, j, k)] + u1 * fq[(1, i, j, k)];
                rhs += w_q * pk * r * udotf;
            }
        }
        lhs -= dpk * e_slice * w_xz * q.gt.weight();
        let mut e_beam = 0.0;
        for i in 0..bv.eta_t_q.nrows() {
            e_beam += 0.5 * bv.eta_t_q[(i, k)].powi(2) + 0.5 * bv.eta_xx_q[(i, k)].powi(2);
        }
        lhs -= dpk * e_beam * w_bx * q.gt.weight();
    }

    let eta_tx = bg.values(&state.eta.eta_t.to_expansion().differentiate(Deriv::X)?);
    let f_vals = bg.values(&ctx.forcing.beam);
    let (nbx, nbt) = bg.shape();
    for k in 0..nbt {
        let pk = phi_b[k];
        for i in 0..nbx {
            lhs += w_b * pk * eta_tx[(i, k)].powi(2);
            rhs += w_b * pk * f_vals[(i, k)] * bv.eta_t[(i, k)];
        }
    }

    let residual = lhs - rhs;
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    Ok(BalanceReport {
        lhs,
        rhs,
        residual,
        defect: residual.max(0.0),
        scale,
        warning,
    })
}

// ---------------------------------------------------------------------------
// Weak residuals against coupled test pairs
// ---------------------------------------------------------------------------

/// A vector test function sampled on the volumetric grid together with its
/// trace on the displaced interface.
pub struct TestField {
    pub v: [Array3<f64>; 2],
    pub dt: [Array3<f64>; 2],
    pub dx: [Array3<f64>; 2],
    pub dz: [Array3<f64>; 2],
    /// components on the interface grid, evaluated on the displaced curve
    pub trace: [Array2<f64>; 2],
}

/// A scalar interface test function with the derivatives the beam form needs.
pub struct BeamTestField {
    pub v: Array2<f64>,
    pub dt: Array2<f64>,
    pub dx: Array2<f64>,
    pub dxx: Array2<f64>,
}

/// Momentum form tested with `tf`, split into (physical, artificial, penalty)
/// contributions. The state is treated as its own lagged iterate.
pub fn momentum_tested(
    state: &CoupledState,
    ctx: &DiagContext,
    tf: &TestField,
) -> Result<(f64, f64, f64)> {
    let disc = ctx.disc;
    let q = &disc.quad;
    let p = &ctx.params;
    let fv = field_values(state, q);
    let (nx, nz, nt) = q.shape();
    let w_q = q.cell_weight();
    let fq = q.vector_values(&ctx.forcing.fluid);
    let big_m = p.m_level;

    let mut physical = 0.0;
    let mut artificial = 0.0;
    for i in 0..nx {
        for j in 0..nz {
            for k in 0..nt {
                let id = (i, j, k);
                let r = fv.rho[id];
                let u = [fv.u[0][id], fv.u[1][id]];
                let uu = u[0] * u[0] + u[1] * u[1];
                let grad_phi = [
                    [tf.dx[0][id], tf.dx[1][id]],
                    [tf.dz[0][id], tf.dz[1][id]],
                ];
                let g = [
                    [fv.g[0][0][id], fv.g[0][1][id]],
                    [fv.g[1][0][id], fv.g[1][1][id]],
                ];
                let div_u = g[0][0] + g[1][1];
                let div_phi = grad_phi[0][0] + grad_phi[1][1];
                let mut conv = 0.0;
                let mut s_dphi = 0.0;
                let mut grad_pair = 0.0;
                let grad_rho = [fv.rho_x[id], fv.rho_z[id]];
                for a in 0..2 {
                    for b in 0..2 {
                        conv += r * u[a] * u[b] * grad_phi[a][b];
                        let s_ab = p.mu * (g[a][b] + g[b][a])
                            + if a == b {
                                (p.zeta - p.mu) * div_u
                            } else {
                                0.0
                            };
                        s_dphi += s_ab * grad_phi[a][b];
                        grad_pair += grad_rho[a] * tf.v[b][id] * g[a][b];
                    }
                }
                let u_dt_phi = u[0] * tf.dt[0][id] + u[1] * tf.dt[1][id];
                let u_phi = u[0] * tf.v[0][id] + u[1] * tf.v[1][id];
                let f_phi = fq[(0, i, j, k)] * tf.v[0][id] + fq[(1, i, j, k)] * tf.v[1][id];
                physical += w_q
                    * (r * u_dt_phi + conv + pow_pos(r, p.gamma) * div_phi - s_dphi
                        + r * f_phi);
                artificial += w_q
                    * (p.delta * u_dt_phi + p.delta * pow_pos(r, p.a_exp) * div_phi
                        - p.delta * uu * u_phi
                        - p.eps * grad_pair
                        + 0.5 * p.eps * (big_m - r) * u_phi);
            }
        }
    }

    // −(1/ε) ∫ (v − η_t e₂)·φ on the displaced interface
    let bv = beam_values(state, disc)?;
    let bg = &disc.beam_grid;
    let penalty = -(bg.inner(&bv.gap0, &tf.trace[0]) + bg.inner(&bv.gap1, &tf.trace[1])) / p.eps;
    Ok((physical, artificial, penalty))
}

/// Beam form tested with `btf`, split into (physical, penalty).
pub fn structure_tested(
    state: &CoupledState,
    ctx: &DiagContext,
    btf: &BeamTestField,
) -> Result<(f64, f64)> {
    let disc = ctx.disc;
    let bg = &disc.beam_grid;
    let eta_t_exp = state.eta.eta_t.to_expansion();
    let eta_t = bg.values(&eta_t_exp);
    let eta_tx = bg.values(&eta_t_exp.differentiate(Deriv::X)?);
    let eta_xx = bg.values(&state.eta.eta.to_expansion().differentiate(Deriv::Xx)?);
    let f_vals = bg.values(&ctx.forcing.beam);
    let physical = bg.inner(&eta_t, &btf.dt) - bg.inner(&eta_xx, &btf.dxx)
        - bg.inner(&eta_tx, &btf.dx)
        + bg.inner(&f_vals, &btf.v);
    let bv = beam_values(state, disc)?;
    // −(1/ε) ∫ (η_t − v·e₂) ψ = +(1/ε) ∫ gap₁ ψ
    let penalty = bg.inner(&bv.gap1, &btf.v) / ctx.params.eps;
    Ok((physical, penalty))
}

/// Strong continuity residual tested with pointwise values `g` on the
/// volumetric grid: ∫ (∂tρ + ∇·(ρu) − εΔρ + ε(ρ − M)) g.
pub fn density_tested(state: &CoupledState, ctx: &DiagContext, g: &Array3<f64>) -> f64 {
    let disc = ctx.disc;
    let q = &disc.quad;
    let rho = &state.rho.expansion;
    let u_exp = state.u.to_expansion();
    let rv = q.scalar_values(rho);
    let u0 = q.scalar_values(&u_exp.component(0));
    let u1 = q.scalar_values(&u_exp.component(1));
    // ∇·(ρu) exactly: the product is inside the grid band
    let mx = q.analyze(&(&rv * &u0)).differentiate(Deriv::X);
    let mz = q.analyze(&(&rv * &u1)).differentiate(Deriv::Z);
    let div = q.scalar_values(&mx) + q.scalar_values(&mz);
    let lap = q.scalar_values(&rho.differentiate(Deriv::X).differentiate(Deriv::X))
        + q.scalar_values(&rho.differentiate(Deriv::Z).differentiate(Deriv::Z));
    let dt = q.scalar_values(&rho.differentiate(Deriv::T));
    let eps = ctx.params.eps;
    let r = &dt + &div - eps * &lap + eps * (&rv - ctx.params.m_level);
    q.inner(&r, g)
}

/// Smooth 2H-periodic bump with χ(0) = 1, band-limited to `band` harmonics.
pub struct VerticalBump {
    fourier: Fourier1d,
    coeff: Vec<f64>,
    dcoeff: Vec<f64>,
}

impl VerticalBump {
    pub fn new(half_height: f64, band: usize, width: f64) -> Self {
        let fourier = Fourier1d::new(2.0 * half_height, band);
        let grid = Grid1d::new(fourier.clone(), 4 * band + 4);
        // periodized Gaussian-like profile, then truncation and rescaling so
        // the value at 0 is exactly 1 after truncation
        let raw: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&s| {
                let w = (std::f64::consts::PI * s / (2.0 * half_height)).sin();
                (-(w / width).powi(2)).exp()
            })
            .collect();
        let mut coeff = vec![0.0; fourier.dim()];
        for j in 0..fourier.dim() {
            let mut s = 0.0;
            for (i, &x) in grid.nodes().iter().enumerate() {
                s += raw[i] * fourier.eval(j, x);
            }
            coeff[j] = s * grid.weight() / fourier.l2_gram(j);
        }
        let at_zero = fourier.eval_series(&coeff, 0.0);
        for c in coeff.iter_mut() {
            *c /= at_zero;
        }
        let dcoeff = fourier.differentiate(&coeff);
        Self {
            fourier,
            coeff,
            dcoeff,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.fourier.eval_series(&self.coeff, s)
    }

    pub fn deriv(&self, s: f64) -> f64 {
        self.fourier.eval_series(&self.dcoeff, s)
    }
}

/// Residuals of the coupled momentum form against lifted pairs: ψ runs over
/// products of the first `n_space` beam modes with every time mode, and
/// φ = ψ(t,x) χ(z − η(t,x)) e₂ with χ a truncated periodic bump equal to 1 at
/// the interface.
pub fn coupled_weak_residual(
    state: &CoupledState,
    ctx: &DiagContext,
    n_space: usize,
) -> Result<WeakResidualReport> {
    let disc = ctx.disc;
    let q = &disc.quad;
    let bg = &disc.beam_grid;
    let n_space = n_space.min(disc.beam.len());
    let bump = VerticalBump::new(disc.domain.half_height, 8, 0.35);

    // displacement and its derivatives on (x, t) node pairs of both grids
    let eta_exp = state.eta.eta.to_expansion();
    let eta_x_exp = eta_exp.differentiate(Deriv::X)?;
    let eta_t_exp = state.eta.eta_t.to_expansion();
    let gq = BeamGrid::new(q.gx.clone(), q.gt.clone());
    let eta_q = gq.values(&eta_exp);
    let eta_x_q = gq.values(&eta_x_exp);
    let eta_t_q = gq.values(&eta_t_exp);

    let (nx, nz, nt) = q.shape();
    let shape = (nx, nz, nt);
    let mut pairs = Vec::new();
    let mut constraint_defect: f64 = 0.0;
    let mut max_physical: f64 = 0.0;
    let mut max_total: f64 = 0.0;

    for is in 0..n_space {
        for jt in 0..disc.time.dim() {
            // ψ and derivatives on the volumetric (x,t) nodes
            let mut v = Array3::zeros(shape);
            let mut dt = Array3::zeros(shape);
            let mut dx = Array3::zeros(shape);
            let mut dz = Array3::zeros(shape);
            for (i, &x) in q.gx.nodes().iter().enumerate() {
                let s_val = disc.beam.eval(is, x);
                let s_x = disc
                    .beam
                    .fourier()
                    .eval_series(&disc.beam.deriv_coeff(is, 1), x);
                for (k, &t) in q.gt.nodes().iter().enumerate() {
                    let tau = disc.time.eval(jt, t);
                    let tau_t = disc
                        .time
                        .fourier()
                        .deriv_map(jt)
                        .map_or(0.0, |(j2, f)| f * disc.time.eval(j2, t));
                    let psi = s_val * tau;
                    let psi_t = s_val * tau_t;
                    let psi_x = s_x * tau;
                    let (e, ex, et) = (eta_q[(i, k)], eta_x_q[(i, k)], eta_t_q[(i, k)]);
                    for (j, &z) in q.gz.nodes().iter().enumerate() {
                        let s = z - e;
                        let chi = bump.eval(s);
                        let chi_d = bump.deriv(s);
                        v[(i, j, k)] = psi * chi;
                        dt[(i, j, k)] = psi_t * chi - psi * chi_d * et;
                        dx[(i, j, k)] = psi_x * chi - psi * chi_d * ex;
                        dz[(i, j, k)] = psi * chi_d;
                    }
                }
            }
            // trace on the displaced interface and the interface test values
            let (nbx, nbt) = bg.shape();
            let mut trace1 = Array2::zeros((nbx, nbt));
            let mut bv_v = Array2::zeros((nbx, nbt));
            let mut bv_dt = Array2::zeros((nbx, nbt));
            let mut bv_dx = Array2::zeros((nbx, nbt));
            let mut bv_dxx = Array2::zeros((nbx, nbt));
            for (i, &x) in bg.gx.nodes().iter().enumerate() {
                let s_val = disc.beam.eval(is, x);
                let s_x = disc
                    .beam
                    .fourier()
                    .eval_series(&disc.beam.deriv_coeff(is, 1), x);
                let s_xx = disc
                    .beam
                    .fourier()
                    .eval_series(&disc.beam.deriv_coeff(is, 2), x);
                for (k, &t) in bg.gt.nodes().iter().enumerate() {
                    let tau = disc.time.eval(jt, t);
                    let tau_t = disc
                        .time
                        .fourier()
                        .deriv_map(jt)
                        .map_or(0.0, |(j2, f)| f * disc.time.eval(j2, t));
                    let psi = s_val * tau;
                    bv_v[(i, k)] = psi;
                    bv_dt[(i, k)] = s_val * tau_t;
                    bv_dx[(i, k)] = s_x * tau;
                    bv_dxx[(i, k)] = s_xx * tau;
                    // φ on the wrapped curve: χ of a whole-period shift is χ(0)
                    let e = eta_exp.eval(x, t);
                    let wrapped =
                        crate::geometry::wrap_eta(e, disc.domain.half_height)?;
                    let chi_hat = bump.eval(wrapped.eta_hat - e);
                    trace1[(i, k)] = psi * chi_hat;
                    constraint_defect = constraint_defect.max((psi * chi_hat - psi).abs());
                }
            }
            let tf = TestField {
                v: [Array3::zeros(shape), v],
                dt: [Array3::zeros(shape), dt],
                dx: [Array3::zeros(shape), dx],
                dz: [Array3::zeros(shape), dz],
                trace: [Array2::zeros((nbx, nbt)), trace1],
            };
            let btf = BeamTestField {
                v: bv_v,
                dt: bv_dt,
                dx: bv_dx,
                dxx: bv_dxx,
            };
            let (phys_m, art, pen_m) = momentum_tested(state, ctx, &tf)?;
            let (phys_s, pen_s) = structure_tested(state, ctx, &btf)?;
            let physical = phys_m + phys_s;
            let penalty = pen_m + pen_s;
            let total = physical + art + penalty;
            max_physical = max_physical.max(physical.abs());
            max_total = max_total.max(total.abs());
            pairs.push(PairResidual {
                physical,
                artificial: art,
                penalty,
                total,
            });
        }
    }

    let continuity = continuity_residual(
        &state.rho.expansion,
        &state.u.to_expansion(),
        &disc.domain,
        ctx.params.eps,
        ctx.mass,
    );
    Ok(WeakResidualReport {
        pairs,
        max_physical,
        max_total,
        constraint_defect,
        continuity,
    })
}

/// |2‖𝔻(w)‖² − ‖∇w‖² − ‖∇·w‖²| on the periodic box; identically zero for
/// periodic fields.
pub fn korn_defect(w: &VectorExpansion, quad: &WorkGrid) -> f64 {
    let wx = quad.vector_values(&w.differentiate(Deriv::X));
    let wz = quad.vector_values(&w.differentiate(Deriv::Z));
    let g = |a: usize, b: usize| -> Array3<f64> {
        let src = if a == 0 { &wx } else { &wz };
        src.index_axis(ndarray::Axis(0), b).to_owned()
    };
    let mut sym2 = Array3::zeros(g(0, 0).raw_dim());
    let mut grad2 = Array3::zeros(g(0, 0).raw_dim());
    for a in 0..2 {
        for b in 0..2 {
            let gab = g(a, b);
            let gba = g(b, a);
            sym2 += &(&gab * &gab + &gab * &gba);
            grad2 += &(&gab * &gab);
        }
    }
    let div = g(0, 0) + g(1, 1);
    let lhs = quad.integrate(&sym2);
    let rhs = quad.integrate(&grad2) + quad.integrate(&(&div * &div));
    (lhs - rhs).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{
        fixed_point_step, quiescent_state, run_stage, Discretization, ForcingMode, ForcingSpec,
        PhysicalParams, StageParams,
    };
    use crate::geometry::DomainSpec;

    fn domain() -> DomainSpec {
        DomainSpec::new(1.0, 1.0, 1.0).unwrap()
    }

    fn phys() -> PhysicalParams {
        PhysicalParams {
            gamma: 2.0,
            a_exp: 5.0,
            mu: 1.0,
            zeta: 1.0,
            mass: 2.0,
        }
    }

    fn converged_state(
        disc: &Discretization,
        p: &PhysicalParams,
        spec: &ForcingSpec,
        eps: f64,
        delta: f64,
    ) -> (CoupledState, Forcing) {
        let forcing = spec.realize(disc).unwrap();
        let mut stage = StageParams::new(eps, delta);
        stage.tol = 1e-13;
        let initial = quiescent_state(disc, p, eps).unwrap();
        let state = run_stage(initial, disc, p, &forcing, &stage).unwrap();
        assert!(state.converged, "history {:?}", state.update_history);
        (state, forcing)
    }

    fn small_forcing() -> ForcingSpec {
        ForcingSpec {
            beam: vec![ForcingMode {
                amplitude: 1e-3,
                space_mode: 0,
                time_mode: 1,
            }],
            fluid: vec![ForcingMode {
                amplitude: 1e-3,
                space_mode: 2,
                time_mode: 2,
            }],
        }
    }

    #[test]
    fn quiescent_energy_is_the_closed_form_constant() {
        // ρ≡1 on |Ω|=2 with γ=2, δ=0.1, a=5 → E=2, E_δ=2.05
        let disc = Discretization::new(domain(), 1, 2, 6).unwrap();
        let p = phys();
        let state = quiescent_state(&disc, &p, 1e-1).unwrap();
        let forcing = ForcingSpec::default().realize(&disc).unwrap();
        let ctx = DiagContext {
            disc: &disc,
            params: p.fluid_params(&disc.domain, 1e-1, 1e-1),
            mass: p.mass,
            forcing: &forcing,
        };
        let rep = energy(&state, &ctx).unwrap();
        for (&e, &ed) in rep.energy.iter().zip(rep.energy_delta.iter()) {
            assert!((e - 2.0).abs() < 1e-12, "E = {e}");
            assert!((ed - 2.05).abs() < 1e-12, "E_δ = {ed}");
        }
        assert!(rep.balance_residual.abs() < 1e-12 * rep.balance_scale);
        assert!(rep.mass_error < 1e-12);
        assert!(rep.penalty_residual < 1e-24);
    }

    #[test]
    fn kinetic_energy_of_a_manufactured_field_matches_closed_form() {
        // u = sin(2πx/L) e₁ constant in time, ρ≡1: ½∫ρ|u|² = |Ω|/4
        let disc = Discretization::new(domain(), 1, 2, 16).unwrap();
        let p = phys();
        let mut state = quiescent_state(&disc, &p, 1e-1).unwrap();
        let idx = disc
            .fluid
            .modes()
            .iter()
            .position(|m| {
                m.comp == 0
                    && disc.fluid.fx().is_sin(m.jx)
                    && disc.fluid.fx().harmonic_of(m.jx) == 1
                    && m.jz == 0
            })
            .unwrap();
        state.u.coeff[(idx, 0)] = 1.0;
        let forcing = ForcingSpec::default().realize(&disc).unwrap();
        let ctx = DiagContext {
            disc: &disc,
            params: p.fluid_params(&disc.domain, 1e-1, 0.0),
            mass: p.mass,
            forcing: &forcing,
        };
        let rep = energy(&state, &ctx).unwrap();
        let expect = 2.0 + 0.25 * disc.domain.measure(); // rest energy + kinetic
        for &e in &rep.energy {
            assert!((e - expect).abs() < 1e-12, "E = {e} vs {expect}");
        }
    }

    #[test]
    fn balance_identity_holds_on_a_converged_forced_stage() {
        let disc = Discretization::new(domain(), 1, 2, 8).unwrap();
        let p = phys();
        let (state, forcing) = converged_state(&disc, &p, &small_forcing(), 1e-1, 1e-1);
        let ctx = DiagContext {
            disc: &disc,
            params: p.fluid_params(&disc.domain, 1e-1, 1e-1),
            mass: p.mass,
            forcing: &forcing,
        };
        let rep = energy_balance(&state, &ctx, &[1.0]).unwrap();
        assert!(
            rep.residual.abs() <= 1e-9 * rep.scale,
            "residual {} scale {}",
            rep.residual,
            rep.scale
        );
        assert!(rep.warning.is_none());
        // corrupting the state must be detectable well above tolerance; the
        // balance residual of the corrupted state is dominated by the changed
        // dissipation, which dwarfs the identity tolerance
        let mut bad = state.clone();
        bad.u.scale(10.0);
        let rep_bad = energy_balance(&bad, &ctx, &[1.0]).unwrap();
        assert!(
            rep_bad.residual.abs() > 10.0 * 1e-8 * rep_bad.scale,
            "corrupted residual {} scale {}",
            rep_bad.residual,
            rep_bad.scale
        );
    }

    #[test]
    fn pair_u_eta_t_reproduces_the_balance_line() {
        let disc = Discretization::new(domain(), 1, 2, 8).unwrap();
        let p = phys();
        let (state, forcing) = converged_state(&disc, &p, &small_forcing(), 1e-1, 1e-1);
        let ctx = DiagContext {
            disc: &disc,
            params: p.fluid_params(&disc.domain, 1e-1, 1e-1),
            mass: p.mass,
            forcing: &forcing,
        };

        // test field φ = u
        let q = &disc.quad;
        let u_exp = state.u.to_expansion();
        let comp = |e: &VectorExpansion, c: usize| q.scalar_values(&e.component(c));
        let du_t = u_exp.differentiate(Deriv::T);
        let du_x = u_exp.differentiate(Deriv::X);
        let du_z = u_exp.differentiate(Deriv::Z);
        let tr = trace_velocity(
            &u_exp,
            &state.eta.eta.to_expansion(),
            disc.domain.half_height,
            &disc.beam_grid,
        )
        .unwrap();
        let tf = TestField {
            v: [comp(&u_exp, 0), comp(&u_exp, 1)],
            dt: [comp(&du_t, 0), comp(&du_t, 1)],
            dx: [comp(&du_x, 0), comp(&du_x, 1)],
            dz: [comp(&du_z, 0), comp(&du_z, 1)],
            trace: [tr.component(0), tr.component(1)],
        };
        // interface test ψ = η_t
        let bg = &disc.beam_grid;
        let eta_t_exp = state.eta.eta_t.to_expansion();
        let btf = BeamTestField {
            v: bg.values(&eta_t_exp),
            dt: bg.values(&eta_t_exp.differentiate(Deriv::T).unwrap()),
            dx: bg.values(&eta_t_exp.differentiate(Deriv::X).unwrap()),
            dxx: bg.values(&eta_t_exp.differentiate(Deriv::Xx).unwrap()),
        };
        let (phys_m, art, pen_m) = momentum_tested(&state, &ctx, &tf).unwrap();
        let (phys_s, pen_s) = structure_tested(&state, &ctx, &btf).unwrap();

        // multiplier for the continuity equation in the balance derivation
        let fv = super::field_values(&state, q);
        let uu = &fv.u[0] * &fv.u[0] + &fv.u[1] * &fv.u[1];
        let pm = &ctx.params;
        let mut g = 0.5 * &uu;
        ndarray::Zip::from(&mut g).and(&fv.rho).for_each(|gv, &r| {
            *gv += pm.gamma / (pm.gamma - 1.0) * pow_pos(r, pm.gamma - 1.0)
                + pm.delta * pm.a_exp / (pm.a_exp - 1.0) * pow_pos(r, pm.a_exp - 1.0);
        });
        let r_d = density_tested(&state, &ctx, &g);

        let balance = energy_balance(&state, &ctx, &[1.0]).unwrap();
        let via_pair = -(phys_m + art + pen_m + phys_s + pen_s) + r_d;
        assert!(
            (balance.residual - via_pair).abs() <= 1e-10 * balance.scale,
            "balance {} vs pair route {}",
            balance.residual,
            via_pair
        );
    }

    #[test]
    fn lifted_pairs_satisfy_the_coupling_constraint_and_cancel_penalties() {
        let disc = Discretization::new(domain(), 1, 2, 8).unwrap();
        let p = phys();
        let (state, forcing) = converged_state(&disc, &p, &small_forcing(), 1e-1, 1e-1);
        let ctx = DiagContext {
            disc: &disc,
            params: p.fluid_params(&disc.domain, 1e-1, 1e-1),
            mass: p.mass,
            forcing: &forcing,
        };
        let rep = coupled_weak_residual(&state, &ctx, 2).unwrap();
        assert!(rep.constraint_defect <= 1e-12);
        for pr in &rep.pairs {
            assert!(pr.penalty.abs() <= 1e-12 * (1.0 + pr.total.abs()));
        }
        assert!(rep.continuity.weak_max < 1e-10);
    }

    #[test]
    fn zero_state_has_zero_weak_residuals() {
        let disc = Discretization::new(domain(), 1, 2, 6).unwrap();
        let p = phys();
        let state = quiescent_state(&disc, &p, 1e-1).unwrap();
        let forcing = ForcingSpec::default().realize(&disc).unwrap();
        let ctx = DiagContext {
            disc: &disc,
            params: p.fluid_params(&disc.domain, 1e-1, 1e-1),
            mass: p.mass,
            forcing: &forcing,
        };
        let rep = coupled_weak_residual(&state, &ctx, 2).unwrap();
        // constant density and zero velocity: only ∫ρ^γ ∇·φ and the ε-source
        // terms could survive, and they cancel for ρ ≡ M against ∇·φ
        // integrating to zero over the periodic box at fixed t? they do not
        // pointwise, but the full residual must vanish because the state
        // solves every equation exactly.
        for pr in &rep.pairs {
            assert!(pr.total.abs() < 1e-10, "residual {:?}", pr);
        }
    }

    #[test]
    fn korn_identity_holds_for_random_band_limited_fields() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let fx = Fourier1d::new(1.0, 3);
        let fz = Fourier1d::new(2.0, 3);
        let ft = Fourier1d::new(1.0, 1);
        let mk = |f: &Fourier1d| Grid1d::new(Fourier1d::new(f.period(), 7), 16);
        let quad = WorkGrid::new(mk(&fx), mk(&fz), mk(&ft));
        for _ in 0..5 {
            let mut w = VectorExpansion::zeros(fx.clone(), fz.clone(), ft.clone());
            for v in w.coeff.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let scale = 1.0 + w.norm_l2_sq();
            assert!(korn_defect(&w, &quad) <= 1e-12 * scale);
        }
    }

    #[test]
    fn bump_is_one_at_zero_and_periodic() {
        let b = VerticalBump::new(1.0, 8, 0.35);
        assert!((b.eval(0.0) - 1.0).abs() < 1e-14);
        assert!((b.eval(1.3) - b.eval(1.3 - 2.0)).abs() < 1e-12);
        // finite-difference check of the derivative
        let h = 1e-6;
        let fd = (b.eval(0.4 + h) - b.eval(0.4 - h)) / (2.0 * h);
        assert!((fd - b.deriv(0.4)).abs() < 1e-8);
    }

    #[test]
    fn unconverged_iterate_balance_residual_decreases_with_convergence() {
        let disc = Discretization::new(domain(), 1, 2, 8).unwrap();
        let p = phys();
        let forcing = small_forcing().realize(&disc).unwrap();
        let stage = StageParams::new(1e-1, 1e-1);
        let ctx = DiagContext {
            disc: &disc,
            params: p.fluid_params(&disc.domain, 1e-1, 1e-1),
            mass: p.mass,
            forcing: &forcing,
        };
        let s0 = quiescent_state(&disc, &p, 1e-1).unwrap();
        let s1 = fixed_point_step(&s0, &disc, &p, &forcing, &stage).unwrap();
        let early = energy_balance(&s1, &ctx, &[1.0]).unwrap().residual.abs();
        let (state, _) = converged_state(&disc, &p, &small_forcing(), 1e-1, 1e-1);
        let late = energy_balance(&state, &ctx, &[1.0]).unwrap().residual.abs();
        assert!(late < early || late < 1e-12);
    }
}
