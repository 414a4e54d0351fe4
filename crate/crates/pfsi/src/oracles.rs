//! Independent brute-force reference implementations used to validate the
//! spectral solvers: dense quadrature Gram checks, a monolithic dense solve
//! of the penalized beam problem, a finite-difference-Jacobian root finder
//! for the momentum system, and a finite-difference space-time solver for
//! the damped continuity equation.

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::sync::Arc;

use crate::basis::{
    BeamBasis, BeamGrid, FluidField, Fourier1d, Grid1d, TimeBasis, VectorExpansion, WorkGrid,
};
use crate::error::{Error, Result};
use crate::fluid::FluidSystem;
use crate::geometry::DomainSpec;
use crate::linalg;
use crate::structure::{BeamState, PenaltyInput};

/// Largest finite-difference density grid the oracle accepts per direction.
pub const DENSITY_FD_CAP: usize = 64;
/// Largest beam basis the dense quadrature checks accept.
pub const GRAM_CAP: usize = 64;

// ---------------------------------------------------------------------------
// Dense quadrature Gram checks
// ---------------------------------------------------------------------------

/// Max deviation of ∫(s_i s_k + s_i's_k' + s_i''s_k'') from δ_ik, computed by
/// plain trapezoid quadrature with `nodes` points.
pub fn beam_gram_dense(length: f64, n: usize, nodes: usize) -> Result<f64> {
    if n > GRAM_CAP {
        return Err(Error::Config(format!(
            "beam gram oracle capped at {GRAM_CAP} functions (asked for {n})"
        )));
    }
    let basis = BeamBasis::new(length, n);
    let f = basis.fourier();
    let h = length / nodes as f64;
    let xs: Vec<f64> = (0..nodes).map(|i| i as f64 * h).collect();
    let mut worst: f64 = 0.0;
    // tabulate value, first and second derivative of each basis function
    let mut vals = vec![vec![[0.0; 3]; nodes]; n];
    for i in 0..n {
        let d1 = basis.deriv_coeff(i, 1);
        let d2 = basis.deriv_coeff(i, 2);
        for (p, &x) in xs.iter().enumerate() {
            vals[i][p] = [
                basis.eval(i, x),
                f.eval_series(&d1, x),
                f.eval_series(&d2, x),
            ];
        }
    }
    for i in 0..n {
        for k in 0..n {
            let mut s = 0.0;
            for p in 0..nodes {
                s += vals[i][p][0] * vals[k][p][0]
                    + vals[i][p][1] * vals[k][p][1]
                    + vals[i][p][2] * vals[k][p][2];
            }
            s *= h;
            let expect = if i == k { 1.0 } else { 0.0 };
            worst = worst.max((s - expect).abs());
        }
    }
    Ok(worst)
}

/// Max deviation of the fluid-basis L² Grams from dense quadrature values.
pub fn fluid_gram_dense(length: f64, half_height: f64, n: usize, nodes: usize) -> Result<f64> {
    if n > GRAM_CAP {
        return Err(Error::Config(format!(
            "fluid gram oracle capped at {GRAM_CAP} modes (asked for {n})"
        )));
    }
    let basis = crate::basis::FluidBasis::new(length, half_height, n);
    let hx = length / nodes as f64;
    let hz = 2.0 * half_height / nodes as f64;
    let mut worst: f64 = 0.0;
    for i in 0..basis.len() {
        for k in 0..basis.len() {
            let mut s = 0.0;
            for p in 0..nodes {
                let x = p as f64 * hx;
                for q in 0..nodes {
                    let z = -half_height + q as f64 * hz;
                    let a = basis.eval(i, x, z);
                    let b = basis.eval(k, x, z);
                    s += a[0] * b[0] + a[1] * b[1];
                }
            }
            s *= hx * hz;
            let expect = if i == k { basis.l2_gram(i) } else { 0.0 };
            worst = worst.max((s - expect).abs());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Monolithic dense structure solve
// ---------------------------------------------------------------------------

/// Solve the penalized beam problem by assembling the full coefficient
/// system with explicit quadrature loops (no pairing matrices) and one dense
/// solve. The unknown is the displacement; its velocity is obtained by
/// termwise time differentiation, so the system is square and invertible.
pub fn structure_monolithic(
    input: &PenaltyInput,
    basis: Arc<BeamBasis>,
    time: Arc<TimeBasis>,
    grid: &BeamGrid,
) -> Result<BeamState> {
    if !(input.eps > 0.0) {
        return Err(Error::Config("penalty eps must be positive".into()));
    }
    let n = basis.len();
    let dimt = time.dim();
    let size = n * dimt;
    let (nx, nt) = grid.shape();
    let w = grid.cell_weight();
    let tf = time.fourier();

    // tabulate space factors (value, d1, d2) and time factors (value, d1)
    let mut sx = vec![vec![[0.0; 3]; nx]; n];
    for i in 0..n {
        let d1 = basis.deriv_coeff(i, 1);
        let d2 = basis.deriv_coeff(i, 2);
        for (p, &x) in grid.gx.nodes().iter().enumerate() {
            sx[i][p] = [
                basis.eval(i, x),
                basis.fourier().eval_series(&d1, x),
                basis.fourier().eval_series(&d2, x),
            ];
        }
    }
    let mut tt = vec![vec![[0.0; 2]; nt]; dimt];
    for j in 0..dimt {
        for (q, &t) in grid.gt.nodes().iter().enumerate() {
            let dv = tf
                .deriv_map(j)
                .map_or(0.0, |(j2, fac)| fac * time.eval(j2, t));
            tt[j][q] = [time.eval(j, t), dv];
        }
    }

    let flat = |i: usize, j: usize| i * dimt + j;
    let mut a = DMatrix::zeros(size, size);
    for i in 0..n {
        for j in 0..dimt {
            for k in 0..n {
                for l in 0..dimt {
                    let mut s = 0.0;
                    for p in 0..nx {
                        for q in 0..nt {
                            let (si, sk) = (&sx[i][p], &sx[k][p]);
                            let (tj, tl) = (&tt[j][q], &tt[l][q]);
                            // ∫ η_t ψ_t − ∫ η_xx ψ_xx − ∫ η_tx ψ_x − (1/ε)∫ η_t ψ
                            s += si[0] * tj[1] * sk[0] * tl[1]
                                - si[2] * tj[0] * sk[2] * tl[0]
                                - si[1] * tj[1] * sk[1] * tl[0]
                                - si[0] * tj[1] * sk[0] * tl[0] / input.eps;
                        }
                    }
                    a[(flat(k, l), flat(i, j))] = s * w;
                }
            }
        }
    }

    // RHS: the same equations read  … = −∫fψ − (1/ε)∫(v·e₂)ψ
    let mut b = DVector::zeros(size);
    for k in 0..n {
        for l in 0..dimt {
            let mut s = 0.0;
            for p in 0..nx {
                for q in 0..nt {
                    s += (input.f[(p, q)] + input.v_e2[(p, q)] / input.eps)
                        * sx[k][p][0]
                        * tt[l][q][0];
                }
            }
            b[flat(k, l)] = -s * w;
        }
    }

    let sol = linalg::solve_dense(&a, &b)?;
    let mut state = BeamState::zeros(basis.clone(), time.clone());
    for i in 0..n {
        let row: Vec<f64> = (0..dimt).map(|j| sol[flat(i, j)]).collect();
        let drow = tf.differentiate(&row);
        for j in 0..dimt {
            state.eta.coeff[(i, j)] = row[j];
            state.eta_t.coeff[(i, j)] = drow[j];
        }
    }
    Ok(state)
}

// ---------------------------------------------------------------------------
// Finite-difference-Jacobian fluid root finder
// ---------------------------------------------------------------------------

/// Solve the momentum system by Newton iteration with a centered
/// finite-difference Jacobian (independent of the analytic one).
#[allow(clippy::too_many_arguments)]
pub fn fluid_fd_solve(sys: &FluidSystem, initial: &FluidField) -> Result<FluidField> {
    let mut c = sys.vec_from_field(initial);
    let size = c.len();
    let tol = 1e-12 * sys.scale();
    for _ in 0..60 {
        let r = sys.residual(&c);
        if r.amax() <= tol {
            return Ok(sys.field_from_vec(&c));
        }
        let mut j = DMatrix::zeros(size, size);
        for col in 0..size {
            let h = 1e-6 * (1.0 + c[col].abs());
            let mut cp = c.clone();
            cp[col] += h;
            let mut cm = c.clone();
            cm[col] -= h;
            let dr = (sys.residual(&cp) - sys.residual(&cm)) / (2.0 * h);
            j.set_column(col, &dr);
        }
        let dc = linalg::solve_dense(&j, &(-&r))?;
        c += dc;
    }
    let r = sys.residual(&c);
    if r.amax() <= 10.0 * tol {
        return Ok(sys.field_from_vec(&c));
    }
    Err(Error::NonlinearSolve {
        history: vec![r.amax()],
    })
}

// ---------------------------------------------------------------------------
// Finite-difference space-time density solve
// ---------------------------------------------------------------------------

fn fft3_inplace(data: &mut [Complex<f64>], dims: (usize, usize, usize), inverse: bool) {
    let (nx, nz, nt) = dims;
    let mut planner = FftPlanner::new();
    let mut line = |len: usize, stride: usize, count: usize, base_of: &dyn Fn(usize) -> usize| {
        let fft = if inverse {
            planner.plan_fft_inverse(len)
        } else {
            planner.plan_fft_forward(len)
        };
        let mut buf = vec![Complex::default(); len];
        for c in 0..count {
            let base = base_of(c);
            for (i, b) in buf.iter_mut().enumerate() {
                *b = data[base + i * stride];
            }
            fft.process(&mut buf);
            for (i, b) in buf.iter().enumerate() {
                data[base + i * stride] = *b;
            }
        }
    };
    // t lines
    line(nt, 1, nx * nz, &|c| c * nt);
    // z lines
    line(nz, nt, nx * nt, &|c| {
        let (i, k) = (c / nt, c % nt);
        i * nz * nt + k
    });
    // x lines
    line(nx, nz * nt, nz * nt, &|c| c);
}

/// Second-order centered finite-difference solution of the damped continuity
/// equation on an n×n×n periodic space-time grid, solved by GMRES with an
/// FFT-diagonalized constant-coefficient preconditioner. Returns nodal
/// values indexed (x, z, t) with x ∈ {0, h, …}, z ∈ {−H, −H+h, …},
/// t ∈ {0, h, …}.
pub fn density_fd_oracle(
    u: &VectorExpansion,
    domain: &DomainSpec,
    eps: f64,
    mass: f64,
    n: usize,
) -> Result<Array3<f64>> {
    if n > DENSITY_FD_CAP {
        return Err(Error::Config(format!(
            "finite-difference density oracle capped at {DENSITY_FD_CAP} per direction (asked for {n})"
        )));
    }
    if n < 4 {
        return Err(Error::Config("need at least 4 nodes per direction".into()));
    }
    let (nx, nz, nt) = (n, n, n);
    let hx = domain.length / nx as f64;
    let hz = 2.0 * domain.half_height / nz as f64;
    let ht = domain.period / nt as f64;
    let big_m = mass / domain.measure();

    // velocity on the FD nodes (closed-form evaluation of the expansion)
    let gx = Grid1d::new(Fourier1d::new(domain.length, nx / 2 - 1), nx);
    let gz = Grid1d::new(Fourier1d::new(2.0 * domain.half_height, nz / 2 - 1), nz);
    let gt = Grid1d::new(Fourier1d::new(domain.period, nt / 2 - 1), nt);
    let grid = WorkGrid::new(gx, gz, gt);
    let u0 = grid.scalar_values(&u.component(0));
    let u1 = grid.scalar_values(&u.component(1));

    let size = nx * nz * nt;
    let idx = |i: usize, j: usize, k: usize| (i * nz + j) * nt + k;
    let wrap = |v: usize, n: usize, d: isize| -> usize {
        (v as isize + d).rem_euclid(n as isize) as usize
    };

    let apply = |c: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; size];
        for i in 0..nx {
            let (ip, im) = (wrap(i, nx, 1), wrap(i, nx, -1));
            for j in 0..nz {
                let (jp, jm) = (wrap(j, nz, 1), wrap(j, nz, -1));
                for k in 0..nt {
                    let (kp, km) = (wrap(k, nt, 1), wrap(k, nt, -1));
                    let dt = (c[idx(i, j, kp)] - c[idx(i, j, km)]) / (2.0 * ht);
                    let fx_p = c[idx(ip, j, k)] * u0[(ip, j, k)];
                    let fx_m = c[idx(im, j, k)] * u0[(im, j, k)];
                    let fz_p = c[idx(i, jp, k)] * u1[(i, jp, k)];
                    let fz_m = c[idx(i, jm, k)] * u1[(i, jm, k)];
                    let conv = (fx_p - fx_m) / (2.0 * hx) + (fz_p - fz_m) / (2.0 * hz);
                    let lap = (c[idx(ip, j, k)] - 2.0 * c[idx(i, j, k)] + c[idx(im, j, k)])
                        / (hx * hx)
                        + (c[idx(i, jp, k)] - 2.0 * c[idx(i, j, k)] + c[idx(i, jm, k)])
                            / (hz * hz);
                    out[idx(i, j, k)] = dt + conv - eps * lap + eps * c[idx(i, j, k)];
                }
            }
        }
        out
    };

    // FFT-diagonal inverse of ∂t − εΔ + ε with the same stencils
    let tau = std::f64::consts::TAU;
    let precond = |r: &[f64]| -> Vec<f64> {
        let mut data: Vec<Complex<f64>> = r.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fft3_inplace(&mut data, (nx, nz, nt), false);
        for i in 0..nx {
            let lx = (2.0 - 2.0 * (tau * i as f64 / nx as f64).cos()) / (hx * hx);
            for j in 0..nz {
                let lz = (2.0 - 2.0 * (tau * j as f64 / nz as f64).cos()) / (hz * hz);
                for k in 0..nt {
                    let st = (tau * k as f64 / nt as f64).sin() / ht;
                    let sym = Complex::new(eps * (lx + lz) + eps, st);
                    data[idx(i, j, k)] /= sym;
                }
            }
        }
        fft3_inplace(&mut data, (nx, nz, nt), true);
        let scale = 1.0 / size as f64;
        data.iter().map(|v| v.re * scale).collect()
    };

    let mut b = vec![0.0; size];
    for v in b.iter_mut() {
        *v = eps * big_m;
    }
    let pb = precond(&b);
    let op = |c: &[f64]| precond(&apply(c));
    let x0 = vec![big_m; size];
    let res = linalg::gmres(&op, &pb, Some(&x0), 1e-12, 60, 400)?;
    Ok(Array3::from_shape_vec((nx, nz, nt), res.solution).expect("shape"))
}

/// Convenience: max nodal deviation between the spectral density solve and
/// the finite-difference oracle on the oracle's own grid.
pub fn density_oracle_deviation(
    u: &VectorExpansion,
    domain: &DomainSpec,
    bands: (usize, usize, usize),
    eps: f64,
    mass: f64,
    n: usize,
) -> Result<f64> {
    let fd = density_fd_oracle(u, domain, eps, mass, n)?;
    let spectral = crate::density::solve_density(
        u,
        domain,
        bands,
        &crate::density::DensitySolveOptions::new(eps, mass),
    )?;
    let gx = Grid1d::new(Fourier1d::new(domain.length, n / 2 - 1), n);
    let gz = Grid1d::new(Fourier1d::new(2.0 * domain.half_height, n / 2 - 1), n);
    let gt = Grid1d::new(Fourier1d::new(domain.period, n / 2 - 1), n);
    let vals = WorkGrid::new(gx, gz, gt).scalar_values(&spectral.expansion);
    let mut worst: f64 = 0.0;
    for (a, b) in fd.iter().zip(vals.iter()) {
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}

/// Side-by-side result of one oracle run, for reporting.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
}

impl OracleOutcome {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}
