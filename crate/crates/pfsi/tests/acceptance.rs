//! End-to-end acceptance suite for the coupled solver.
//!
//! Every test states a property of the method — exactness at rest, mass
//! conservation, the discrete energy identity, penalty scaling, agreement
//! with independent oracles, spectral invariants of the bases, residual
//! decay under refinement, and the physical energy inequality — and checks
//! it at desk scale with explicit tolerances.

use std::time::Instant;

use ndarray::Array2;

use pfsi::basis::{
    dealiased_product3, BeamExpansion, BeamGrid, Deriv, Fourier1d, Grid1d, ScalarExpansion,
    VectorExpansion, WorkGrid,
};
use pfsi::diagnostics::{
    coupled_weak_residual, energy, korn_defect, physical_balance, DiagContext,
};
use pfsi::driver::{
    embed_state, quiescent_state, run_continuation, run_stage, suggested_omega, Acceleration,
    ContinuationSchedule, CoupledState, Discretization, Forcing, ForcingMode, ForcingSpec,
    PhysicalParams, StageParams,
};
use pfsi::fluid::{FluidParams, FluidSolveOptions, FluidSystem};
use pfsi::geometry::{trace_velocity, wrap_eta, DomainSpec};
use pfsi::oracles::{
    beam_gram_dense, density_oracle_deviation, fluid_fd_solve, fluid_gram_dense,
    structure_monolithic,
};
use pfsi::structure::{solve_structure, BeamState, PenaltyInput};

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

/// Band-limited forcing used by all forced acceptance runs.
fn forcing_spec() -> ForcingSpec {
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

fn diag_ctx<'a>(
    disc: &'a Discretization,
    forcing: &'a Forcing,
    eps: f64,
    delta: f64,
) -> DiagContext<'a> {
    DiagContext {
        disc,
        params: phys().fluid_params(&disc.domain, eps, delta),
        mass: phys().mass,
        forcing,
    }
}

/// Solve one stage, warm-started when a previous state is given.
fn solve_stage(
    disc: &Discretization,
    forcing: &Forcing,
    warm: Option<&CoupledState>,
    eps: f64,
    delta: f64,
    depth: usize,
    omega: f64,
    max_iters: usize,
) -> CoupledState {
    let p = phys();
    let initial = match warm {
        Some(s) => embed_state(s, disc, &p, eps).unwrap(),
        None => quiescent_state(disc, &p, eps).unwrap(),
    };
    let mut sp = StageParams::new(eps, delta);
    sp.tol = 1e-11;
    sp.omega = omega;
    sp.max_iters = max_iters;
    sp.accel = if depth == 0 {
        Acceleration::Relaxation
    } else {
        Acceleration::Anderson { depth }
    };
    run_stage(initial, disc, &p, forcing, &sp).unwrap()
}

// ---------------------------------------------------------------------------
// 1. With zero forcing the rest state is recovered exactly and immediately.
// ---------------------------------------------------------------------------

#[test]
fn zero_forcing_yields_the_rest_state_in_two_iterations() {
    let spec = ForcingSpec::default();
    for &(eps, delta, m, nb, nf) in &[(1e-1f64, 1e-1f64, 1usize, 2usize, 6usize), (1e-2, 1e-3, 2, 4, 8)] {
        let t0 = Instant::now();
        let disc = Discretization::new(domain(), m, nb, nf).unwrap();
        let forcing = spec.realize(&disc).unwrap();
        let state = solve_stage(&disc, &forcing, None, eps, delta, 0, 0.5, 200);
        assert!(state.converged);
        assert!(
            state.iterations <= 2,
            "took {} iterations at eps={eps}",
            state.iterations
        );

        // exact rest state: constant density m0/|Omega|, no flow, no deflection
        let rho0 = phys().mass / disc.domain.measure();
        for v in state.rho.values.iter() {
            assert!((v - rho0).abs() <= 1e-12, "rho deviates: {v}");
        }
        for c in state.u.coeff.iter() {
            assert!(c.abs() <= 1e-12, "velocity coefficient {c}");
        }
        for c in state
            .eta
            .eta
            .coeff
            .iter()
            .chain(state.eta.eta_t.coeff.iter())
        {
            assert!(c.abs() <= 1e-12, "beam coefficient {c}");
        }

        // every residual functional vanishes to round-off
        let ctx = diag_ctx(&disc, &forcing, eps, delta);
        let rep = energy(&state, &ctx).unwrap();
        assert!(rep.mass_error <= 1e-12 * phys().mass);
        assert!(rep.balance_residual.abs() <= 1e-12 * rep.balance_scale);
        assert!(rep.penalty_residual <= 1e-12);
        let weak = coupled_weak_residual(&state, &ctx, 2).unwrap();
        assert!(weak.max_total <= 1e-12, "weak residual {}", weak.max_total);
        assert!(
            t0.elapsed().as_secs_f64() < 1.0,
            "rest-state solve took {:?}",
            t0.elapsed()
        );
    }
}

// ---------------------------------------------------------------------------
// 2. Every converged stage conserves total mass in every time slice.
// ---------------------------------------------------------------------------

#[test]
fn converged_stages_conserve_mass_in_every_time_slice() {
    let disc = Discretization::new(domain(), 2, 4, 12).unwrap();
    let forcing = forcing_spec().realize(&disc).unwrap();
    let m0 = phys().mass;

    let quiet = quiescent_state(&disc, &phys(), 1e-1).unwrap();
    for &s in &quiet.rho.slice_mass {
        assert!((s - m0).abs() <= 1e-10 * m0, "slice mass {s}");
    }

    let mut warm: Option<CoupledState> = None;
    for &(eps, delta) in &[(1e-1f64, 1e-1f64), (1e-2, 1e-1)] {
        let state = solve_stage(
            &disc,
            &forcing,
            warm.as_ref(),
            eps,
            delta,
            3,
            suggested_omega(eps),
            4000,
        );
        assert!(state.converged);
        for &s in &state.rho.slice_mass {
            assert!(
                (s - m0).abs() <= 1e-10 * m0,
                "slice mass {s} at eps={eps}"
            );
        }
        warm = Some(state);
    }
}

// ---------------------------------------------------------------------------
// 3. The discrete energy identity balances for a forced converged run.
// ---------------------------------------------------------------------------

#[test]
fn energy_identity_balances_for_a_forced_run() {
    let disc = Discretization::new(domain(), 2, 4, 12).unwrap();
    let forcing = forcing_spec().realize(&disc).unwrap();
    let state = solve_stage(&disc, &forcing, None, 1e-1, 1e-1, 3, 0.5, 200);
    assert!(state.converged);
    let ctx = diag_ctx(&disc, &forcing, 1e-1, 1e-1);
    let rep = energy(&state, &ctx).unwrap();
    assert!(
        rep.balance_residual.abs() <= 1e-8 * rep.balance_scale,
        "identity residual {} vs scale {}",
        rep.balance_residual,
        rep.balance_scale
    );
}

// ---------------------------------------------------------------------------
// 4. The penalty residual shrinks linearly with the penalty parameter.
// ---------------------------------------------------------------------------

#[test]
fn penalty_residual_scales_linearly_with_the_penalty_parameter() {
    let disc = Discretization::new(domain(), 2, 4, 12).unwrap();
    let forcing = forcing_spec().realize(&disc).unwrap();
    let delta = 1e-1;
    let mut warm: Option<CoupledState> = None;
    let mut penalties = Vec::new();
    let mut ratios = Vec::new();
    for &eps in &[1e-1f64, 1e-2, 1e-3] {
        let state = solve_stage(
            &disc,
            &forcing,
            warm.as_ref(),
            eps,
            delta,
            3,
            suggested_omega(eps),
            4000,
        );
        assert!(state.converged, "stage at eps={eps} did not converge");
        let ctx = diag_ctx(&disc, &forcing, eps, delta);
        let rep = energy(&state, &ctx).unwrap();
        penalties.push(rep.penalty_residual);
        ratios.push(rep.penalty_residual / eps);
        warm = Some(state);
    }
    for w in penalties.windows(2) {
        assert!(
            w[1] < w[0],
            "penalty residuals not decreasing: {penalties:?}"
        );
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0f64, f64::max);
    assert!(
        hi / lo < 5.0,
        "residual/eps varies by {:.2} across the sweep ({ratios:?})",
        hi / lo
    );
}

// ---------------------------------------------------------------------------
// 5a. The factored structure solver agrees with a dense monolithic solve.
// ---------------------------------------------------------------------------

#[test]
fn structure_solver_matches_the_dense_monolithic_oracle() {
    let disc = Discretization::new(domain(), 2, 5, 6).unwrap();
    let grid = &disc.beam_grid;
    let (nx, nt) = grid.shape();
    let mut v_e2 = Array2::zeros((nx, nt));
    let mut f = Array2::zeros((nx, nt));
    for (p, &x) in grid.gx.nodes().iter().enumerate() {
        for (q, &t) in grid.gt.nodes().iter().enumerate() {
            v_e2[(p, q)] = 0.4 * disc.beam.eval(2, x) * disc.time.eval(1, t)
                - 0.1 * disc.beam.eval(0, x) * disc.time.eval(3, t);
            f[(p, q)] = disc.beam.eval(1, x) * (0.5 + disc.time.eval(2, t));
        }
    }
    let input = PenaltyInput {
        v_e2,
        f,
        eps: 5e-2,
    };
    let fast = solve_structure(&input, disc.beam.clone(), disc.time.clone(), grid).unwrap();
    let dense = structure_monolithic(&input, disc.beam.clone(), disc.time.clone(), grid).unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in fast
        .eta
        .coeff
        .iter()
        .zip(dense.eta.coeff.iter())
        .chain(fast.eta_t.coeff.iter().zip(dense.eta_t.coeff.iter()))
    {
        worst = worst.max((a - b).abs());
    }
    assert!(worst <= 1e-10, "max coefficient deviation {worst}");
}

// ---------------------------------------------------------------------------
// 5b. The fluid Newton solver agrees with a finite-difference-Jacobian
//     root finder.
// ---------------------------------------------------------------------------

#[test]
fn fluid_newton_matches_a_fd_jacobian_root_finder() {
    let disc = Discretization::new(domain(), 2, 2, 8).unwrap();
    let params = FluidParams {
        gamma: 2.0,
        a_exp: 5.0,
        delta: 1e-1,
        eps: 1e-1,
        mu: 1.0,
        zeta: 1.0,
        m_level: 1.0,
    };
    let rho = {
        let mut e = ScalarExpansion::zeros(
            Fourier1d::new(1.0, 2),
            Fourier1d::new(2.0, 2),
            Fourier1d::new(1.0, 2),
        );
        e.coeff[(0, 0, 0)] = 1.0;
        e.coeff[(1, 0, 0)] = 0.04;
        e.coeff[(0, 2, 1)] = 0.02;
        e
    };
    let mut u_lag = pfsi::basis::FluidField::zeros(disc.fluid.clone(), disc.time.clone());
    u_lag.coeff[(2, 1)] = 0.02;
    u_lag.coeff[(4, 3)] = -0.01;
    let eta_lag = BeamState::zeros(disc.beam.clone(), disc.time.clone());
    let mut forcing = VectorExpansion::zeros(
        disc.fluid.fx().clone(),
        disc.fluid.fz().clone(),
        disc.time.fourier().clone(),
    );
    forcing.coeff[(1, 0, 1, 1)] = 0.01;
    forcing.coeff[(0, 1, 0, 2)] = 0.005;
    let sys = FluidSystem::new(
        disc.fluid.clone(),
        disc.time.clone(),
        &disc.quad,
        &disc.beam_grid,
        disc.domain.half_height,
        &rho,
        &u_lag,
        &eta_lag,
        &forcing,
        params,
    )
    .unwrap();
    let newton = sys.solve(&u_lag, &FluidSolveOptions::default()).unwrap();
    let fd = fluid_fd_solve(&sys, &u_lag).unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in newton.coeff.iter().zip(fd.coeff.iter()) {
        worst = worst.max((a - b).abs());
    }
    assert!(worst <= 1e-9, "max coefficient deviation {worst}");
}

// ---------------------------------------------------------------------------
// 5c. The spectral density solver agrees with a 64-cubed finite-difference
//     space-time discretization of the damped continuity equation.
// ---------------------------------------------------------------------------

#[test]
fn density_solver_matches_the_finite_difference_oracle() {
    let d = domain();
    let fb = pfsi::basis::FluidBasis::new(d.length, d.half_height, 6);
    let mut u = VectorExpansion::zeros(
        fb.fx().clone(),
        fb.fz().clone(),
        Fourier1d::new(d.period, 1),
    );
    // compressive in-band velocity so the density genuinely varies
    u.coeff[(0, 1, 0, 0)] = 0.01;
    u.coeff[(1, 0, 1, 1)] = 0.005;
    let dev = density_oracle_deviation(&u, &d, (4, 4, 2), 1e-1, 2.0, 64).unwrap();
    assert!(dev <= 1e-4, "deviation {dev}");
}

// ---------------------------------------------------------------------------
// 6. Spectral invariants of the bases and grids.
// ---------------------------------------------------------------------------

#[test]
fn velocity_trace_is_exact_and_linear_for_band_limited_fields() {
    let h = 1.0;
    let fx = Fourier1d::new(1.0, 2);
    let fz = Fourier1d::new(2.0 * h, 2);
    let ft = Fourier1d::new(1.0, 1);
    let mk = |seed: u64| {
        let mut e = VectorExpansion::zeros(fx.clone(), fz.clone(), ft.clone());
        let mut s = seed;
        for c in e.coeff.iter_mut() {
            // deterministic pseudo-random coefficients in (-0.5, 0.5)
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *c = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
        }
        e
    };
    let u1 = mk(1);
    let u2 = mk(2);
    let mut eta = BeamExpansion::zeros(fx.clone(), ft.clone());
    // large mean deflection so the curve wraps through the periodic strip
    eta.coeff[(0, 0)] = 1.4;
    eta.coeff[(1, 1)] = 0.6;
    eta.coeff[(2, 2)] = 0.3;
    let grid = BeamGrid::new(
        Grid1d::new(fx.clone(), 12),
        Grid1d::new(ft.clone(), 10),
    );

    let t1 = trace_velocity(&u1, &eta, h, &grid).unwrap();
    let t2 = trace_velocity(&u2, &eta, h, &grid).unwrap();

    // exactness: the trace equals direct evaluation at the wrapped height
    for (ix, &x) in grid.gx.nodes().iter().enumerate() {
        for (it, &t) in grid.gt.nodes().iter().enumerate() {
            let wrapped = wrap_eta(eta.eval(x, t), h).unwrap();
            assert!((t1.eta_hat[(ix, it)] - wrapped.eta_hat).abs() <= 1e-12);
            let direct = u1.eval(x, wrapped.eta_hat, t);
            for c in 0..2 {
                assert!(
                    (t1.values[(c, ix, it)] - direct[c]).abs() <= 1e-12,
                    "trace deviates at ({ix},{it})"
                );
            }
        }
    }

    // linearity: trace(u1 + 2 u2) = trace(u1) + 2 trace(u2)
    let mut comb = u1.clone();
    for (c, a) in comb.coeff.iter_mut().zip(u2.coeff.iter()) {
        *c += 2.0 * a;
    }
    let tc = trace_velocity(&comb, &eta, h, &grid).unwrap();
    for (v, (a, b)) in tc
        .values
        .iter()
        .zip(t1.values.iter().zip(t2.values.iter()))
    {
        assert!((v - (a + 2.0 * b)).abs() <= 1e-12);
    }
}

#[test]
fn parseval_identity_holds_on_the_quadrature_grid() {
    let fx = Fourier1d::new(1.0, 3);
    let fz = Fourier1d::new(2.0, 2);
    let ft = Fourier1d::new(1.0, 2);
    let mut e = ScalarExpansion::zeros(fx.clone(), fz.clone(), ft.clone());
    let mut s = 7u64;
    for c in e.coeff.iter_mut() {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *c = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
    }
    let grid = WorkGrid::new(
        Grid1d::new(fx, 8),
        Grid1d::new(fz, 6),
        Grid1d::new(ft, 6),
    );
    let vals = grid.scalar_values(&e);
    let quad = grid.integrate(&(&vals * &vals));
    let exact = e.norm_l2_sq();
    assert!(
        (quad - exact).abs() <= 1e-12 * exact.max(1.0),
        "quadrature {quad} vs coefficient sum {exact}"
    );

    // and analysis inverts synthesis exactly
    let back = grid.analyze(&vals);
    for (a, b) in back.coeff.iter().zip(e.coeff.iter()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn dealiased_products_project_high_modes_exactly() {
    let fx = Fourier1d::new(1.0, 3);
    let fz = Fourier1d::new(2.0, 2);
    let ft = Fourier1d::new(1.0, 1);
    let grid = WorkGrid::new(
        Grid1d::new(fx.clone(), 8),
        Grid1d::new(fz.clone(), 6),
        Grid1d::new(ft.clone(), 4),
    );
    // a = sin(3 wx x), b = sin(3 wx x) cos(wz z): the product has x-modes
    // {0, cos 6} of which only the constant survives truncation to band 3,
    // so the dealiased product must equal cos(wz z) / 2 exactly.
    let mut ea = ScalarExpansion::zeros(fx.clone(), fz.clone(), ft.clone());
    ea.coeff[(5, 0, 0)] = 1.0;
    let mut eb = ScalarExpansion::zeros(fx.clone(), fz.clone(), ft.clone());
    eb.coeff[(5, 2, 0)] = 1.0;
    let a = grid.scalar_values(&ea);
    let b = grid.scalar_values(&eb);
    let p = dealiased_product3(&grid, &a, &b, None).unwrap();
    for (iz, &z) in grid.gz.nodes().iter().enumerate() {
        let want = 0.5 * fz.eval(2, z);
        for ix in 0..grid.gx.len() {
            for it in 0..grid.gt.len() {
                assert!(
                    (p[(ix, iz, it)] - want).abs() <= 1e-12,
                    "aliased product at ({ix},{iz},{it}): {} vs {want}",
                    p[(ix, iz, it)]
                );
            }
        }
    }

    // an entirely in-band product is reproduced pointwise
    let mut ec = ScalarExpansion::zeros(fx.clone(), fz.clone(), ft.clone());
    ec.coeff[(1, 0, 0)] = 1.0; // sin(wx x)
    let c = grid.scalar_values(&ec);
    let p2 = dealiased_product3(&grid, &c, &c, None).unwrap();
    for (ix, &x) in grid.gx.nodes().iter().enumerate() {
        let want = fx.eval(1, x).powi(2); // (1 - cos 2wx x)/2, band 2 <= 3
        for iz in 0..grid.gz.len() {
            for it in 0..grid.gt.len() {
                assert!((p2[(ix, iz, it)] - want).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn spectral_differentiation_matches_finite_differences() {
    let fx = Fourier1d::new(1.0, 2);
    let fz = Fourier1d::new(2.0, 2);
    let ft = Fourier1d::new(1.0, 2);
    let mut e = ScalarExpansion::zeros(fx, fz, ft);
    let mut s = 11u64;
    for c in e.coeff.iter_mut() {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *c = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
    }
    let h = 4e-4;
    // 4th-order central stencil
    let fd = |f: &dyn Fn(f64) -> f64, x: f64| {
        (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
    };
    let points = [(0.13, -0.41, 0.29), (0.77, 0.92, 0.61), (0.505, -0.99, 0.05)];
    let dx = e.differentiate(Deriv::X);
    let dz = e.differentiate(Deriv::Z);
    let dt = e.differentiate(Deriv::T);
    for &(x, z, t) in &points {
        let gx = fd(&|s| e.eval(s, z, t), x);
        let gz = fd(&|s| e.eval(x, s, t), z);
        let gt = fd(&|s| e.eval(x, z, s), t);
        assert!((dx.eval(x, z, t) - gx).abs() <= 1e-8, "d/dx at ({x},{z},{t})");
        assert!((dz.eval(x, z, t) - gz).abs() <= 1e-8, "d/dz at ({x},{z},{t})");
        assert!((dt.eval(x, z, t) - gt).abs() <= 1e-8, "d/dt at ({x},{z},{t})");
    }
}

#[test]
fn basis_gram_matrices_are_orthonormal() {
    let beam = beam_gram_dense(1.0, 6, 512).unwrap();
    assert!(beam <= 1e-8, "beam basis deviation {beam}");
    let fluid = fluid_gram_dense(1.0, 1.0, 8, 128).unwrap();
    assert!(fluid <= 1e-8, "fluid basis deviation {fluid}");
}

#[test]
fn korn_identity_holds_on_the_torus() {
    let fx = Fourier1d::new(1.0, 2);
    let fz = Fourier1d::new(2.0, 2);
    let ft = Fourier1d::new(1.0, 1);
    let mut w = VectorExpansion::zeros(fx.clone(), fz.clone(), ft.clone());
    let mut s = 23u64;
    for c in w.coeff.iter_mut() {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        *c = ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
    }
    // quadrature exact for the quadratic integrands
    let quad = WorkGrid::new(
        Grid1d::new(Fourier1d::new(1.0, 4), 10),
        Grid1d::new(Fourier1d::new(2.0, 4), 10),
        Grid1d::new(Fourier1d::new(1.0, 2), 6),
    );
    let defect = korn_defect(&w, &quad);
    assert!(defect <= 1e-8, "Korn defect {defect}");
}

// ---------------------------------------------------------------------------
// 7. The coupled-momentum weak residual against a fixed out-of-span test
//    family decreases as the discretization is refined at fixed (eps, delta).
//    The residual of each converged state is measured with exact quadrature
//    on one common fine evaluation grid.
// ---------------------------------------------------------------------------

#[test]
fn weak_residual_decreases_under_refinement() {
    let spec = forcing_spec();
    let p = phys();
    let eval_disc = Discretization::new(domain(), 5, 10, 32).unwrap();
    let eval_forcing = spec.realize(&eval_disc).unwrap();
    let dimt = eval_disc.time.dim();

    let mut warm: Option<CoupledState> = None;
    let mut residuals = Vec::new();
    for &(m, nb, nf, depth) in &[(2usize, 4usize, 8usize, 3usize), (3, 6, 16, 3), (4, 8, 24, 5)] {
        let disc = Discretization::new(domain(), m, nb, nf).unwrap();
        let forcing = spec.realize(&disc).unwrap();
        let initial = match &warm {
            Some(s) => embed_state(s, &disc, &p, 1e-1).unwrap(),
            None => quiescent_state(&disc, &p, 1e-1).unwrap(),
        };
        let mut sp = StageParams::new(1e-1, 1e-1);
        sp.tol = 1e-12;
        sp.max_iters = 400;
        sp.accel = Acceleration::Anderson { depth };
        let state = run_stage(initial, &disc, &p, &forcing, &sp).unwrap();
        assert!(state.converged, "stage ({m},{nb},{nf}) did not converge");

        let lifted = embed_state(&state, &eval_disc, &p, 1e-1).unwrap();
        let ctx = diag_ctx(&eval_disc, &eval_forcing, 1e-1, 1e-1);
        let rep = coupled_weak_residual(&lifted, &ctx, 2).unwrap();
        // fixed family: first two space members x first three time modes
        let mut worst: f64 = 0.0;
        for is in 0..2 {
            for jt in 0..3 {
                worst = worst.max(rep.pairs[is * dimt + jt].total.abs());
            }
        }
        residuals.push(worst);
        warm = Some(state);
    }
    for w in residuals.windows(2) {
        assert!(
            w[1] < w[0],
            "weak residual not decreasing under refinement: {residuals:?}"
        );
    }
}

// ---------------------------------------------------------------------------
// 8. The physical energy inequality: dropping every artificial term, the
//    defect max(0, LHS - RHS) is non-increasing along the default
//    continuation and vanishes at the final stage.
// ---------------------------------------------------------------------------

#[test]
fn physical_energy_defect_shrinks_along_the_continuation() {
    let spec = forcing_spec();
    let p = phys();
    let schedule = ContinuationSchedule::default_for(2, 4, 12);
    let out = run_continuation(&schedule, domain(), &p, &spec).unwrap();
    if let Some(f) = &out.failure {
        panic!("continuation failed: {f}");
    }
    assert_eq!(out.stages.len(), schedule.stages.len());

    let phi = vec![1.0];
    let mut defects = Vec::new();
    for so in &out.stages {
        assert!(
            so.state.converged,
            "stage eps={} delta={} did not converge after {} iterations",
            so.stage.eps, so.stage.delta, so.state.iterations
        );
        let forcing = spec.realize(&so.disc).unwrap();
        let ctx = diag_ctx(&so.disc, &forcing, so.stage.eps, so.stage.delta);
        let b = physical_balance(&so.state, &ctx, &phi).unwrap();
        defects.push((b.defect, b.scale));
    }
    for w in defects.windows(2) {
        assert!(
            w[1].0 <= w[0].0,
            "physical defect increased along the continuation: {defects:?}"
        );
    }
    let (last, scale) = *defects.last().unwrap();
    assert!(
        last <= 1e-6 * scale,
        "final physical defect {last} vs scale {scale}"
    );
}
