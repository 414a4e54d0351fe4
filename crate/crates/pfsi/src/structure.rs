//! Penalized beam problem: find η in span{s_i(x)τ_j(t)} with
//!   ∫ η_t ψ_t − ∫ η_xx ψ_xx − ∫ η_tx ψ_x − (1/ε)∫ (η_t − v·e₂) ψ = −∫ f ψ
//! for all basis test functions ψ. Solved by the splitting: η_t in the
//! time-mean-free subspace S from a coercive bilinear system, the
//! time-constant part G from a static elliptic system, and
//! η = (mean-free antiderivative of η_t) + G.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::basis::field::{BeamField, BeamGrid};
use crate::basis::{BeamBasis, TimeBasis};
use crate::error::{Error, Result};
use crate::linalg;

/// Beam displacement and its time derivative as Galerkin coefficient fields.
#[derive(Debug, Clone)]
pub struct BeamState {
    pub eta: BeamField,
    pub eta_t: BeamField,
}

impl BeamState {
    pub fn zeros(basis: Arc<BeamBasis>, time: Arc<TimeBasis>) -> Self {
        Self {
            eta: BeamField::zeros(basis.clone(), time.clone()),
            eta_t: BeamField::zeros(basis, time),
        }
    }
}

/// Data driving one structure solve: the vertical trace of the lagged fluid
/// velocity and the beam forcing, both sampled on the beam quadrature grid.
#[derive(Debug, Clone)]
pub struct PenaltyInput {
    /// v·e₂ on the (x, t) nodes of the beam grid.
    pub v_e2: Array2<f64>,
    /// forcing f on the same nodes.
    pub f: Array2<f64>,
    /// penalty parameter ε > 0.
    pub eps: f64,
}

/// Quadrature of ∫_{Γ_T} h(x,t) s_k(x) τ_l(t) dx dt for all (k,l).
fn test_against_basis(
    h: &Array2<f64>,
    basis: &BeamBasis,
    time: &TimeBasis,
    grid: &BeamGrid,
) -> DMatrix<f64> {
    let (nx, nt) = grid.shape();
    let n = basis.len();
    let dimt = time.dim();
    let mut sx = DMatrix::zeros(n, nx);
    for k in 0..n {
        for (i, &x) in grid.gx.nodes().iter().enumerate() {
            sx[(k, i)] = basis.eval(k, x);
        }
    }
    let mut tt = DMatrix::zeros(nt, dimt);
    for (j, &t) in grid.gt.nodes().iter().enumerate() {
        for l in 0..dimt {
            tt[(j, l)] = time.eval(l, t);
        }
    }
    let hv = DMatrix::from_fn(nx, nt, |i, j| h[(i, j)]);
    sx * hv * tt * grid.cell_weight()
}

/// Assemble the coercive bilinear form B on the time-mean-free subspace S
/// (time mode indices 1..2m), ordered as (space i, time j) with time fastest.
fn assemble_b(
    basis: &BeamBasis,
    time: &TimeBasis,
    eps: f64,
) -> (DMatrix<f64>, usize, usize) {
    let n = basis.len();
    let mt = time.dim() - 1; // mean-free time modes
    let a0 = basis.gram_deriv(0);
    let a1 = basis.gram_deriv(1);
    let a2 = basis.gram_deriv(2);
    let d = time.pairing_deriv(); // D[j,l] = ∫ τ_j' τ_l
    let anti = time.pairing_antideriv(); // A[j,l] = ∫ (antider τ_j) τ_l
    let idm = time.pairing_identity();
    let size = n * mt;
    let mut b = DMatrix::zeros(size, size);
    for i in 0..n {
        for k in 0..n {
            for j in 0..mt {
                for l in 0..mt {
                    let (tj, tl) = (j + 1, l + 1);
                    let val = a0[(i, k)] * d[(tj, tl)]
                        + a2[(i, k)] * anti[(tj, tl)]
                        + a1[(i, k)] * idm[(tj, tl)]
                        + a0[(i, k)] * idm[(tj, tl)] / eps;
                    // row = test index (k,l), column = trial index (i,j)
                    b[(k * mt + l, i * mt + j)] = val;
                }
            }
        }
    }
    (b, n, mt)
}

/// Solve the penalized beam problem.
pub fn solve_structure(
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
    // a(v) = ∫ f v + (1/ε) ∫ (ṽ·e₂) v for all retained test modes
    let rhs_full = {
        let mut h = input.f.clone();
        h.scaled_add(1.0 / input.eps, &input.v_e2);
        test_against_basis(&h, &basis, &time, grid)
    };

    let mut state = BeamState::zeros(basis.clone(), time.clone());
    if dimt > 1 {
        let (b, _, mt) = assemble_b(&basis, &time, input.eps);
        // coercivity witness: the symmetric part must be positive definite
        let sym = (&b + b.transpose()) * 0.5;
        if sym.clone().cholesky().is_none() {
            return Err(Error::Internal(
                "beam bilinear form lost positive definiteness".into(),
            ));
        }
        let mut a = DVector::zeros(n * mt);
        for i in 0..n {
            for j in 0..mt {
                a[i * mt + j] = rhs_full[(i, j + 1)];
            }
        }
        let w = linalg::solve_dense(&b, &a)?;
        for i in 0..n {
            for j in 0..mt {
                state.eta_t.coeff[(i, j + 1)] = w[i * mt + j];
            }
        }
    }

    // static part: T · ∫ G_xx s_k'' = ∫_{Γ_T} (f + ṽ·e₂/ε) s_k
    let a2 = basis.gram_deriv(2) * time.period();
    let r0 = DVector::from_fn(n, |k, _| rhs_full[(k, 0)]);
    let g = linalg::solve_dense(&a2, &r0)?;

    // η = mean-free antiderivative of η_t, plus G on the constant time mode
    let ft = time.fourier();
    for i in 0..n {
        let row: Vec<f64> = (0..dimt).map(|j| state.eta_t.coeff[(i, j)]).collect();
        let anti = ft.antiderivative_mean_free(&row);
        for j in 0..dimt {
            state.eta.coeff[(i, j)] = anti[j];
        }
        state.eta.coeff[(i, 0)] = g[i];
    }
    Ok(state)
}

/// Residual of the penalized beam equation tested against every s_k τ_l,
/// as a (n x 2m+1) matrix. Zero (to solver tolerance) for solver output.
pub fn structure_residual(
    state: &BeamState,
    input: &PenaltyInput,
    grid: &BeamGrid,
) -> DMatrix<f64> {
    let basis = &state.eta.basis;
    let time = &state.eta.time;
    let n = basis.len();
    let dimt = time.dim();
    let a0 = basis.gram_deriv(0);
    let a1 = basis.gram_deriv(1);
    let a2 = basis.gram_deriv(2);
    let idm = time.pairing_identity();
    let d = time.pairing_deriv();

    let e = DMatrix::from_fn(n, dimt, |i, j| state.eta.coeff[(i, j)]);
    let et = DMatrix::from_fn(n, dimt, |i, j| state.eta_t.coeff[(i, j)]);

    // ∫ η_t s_k τ_l' : time factor ∫ τ_j τ_l' = D[l,j]
    let term_tt = a0.transpose() * &et * d.transpose();
    // ∫ η_xx s_k'' τ_l
    let term_xx = a2.transpose() * &e * &idm;
    // ∫ η_tx s_k' τ_l
    let term_tx = a1.transpose() * &et * &idm;
    // (1/ε) ∫ η_t s_k τ_l
    let term_pen = a0.transpose() * &et * &idm / input.eps;

    let qv = test_against_basis(&input.v_e2, basis, time, grid) / input.eps;
    let qf = test_against_basis(&input.f, basis, time, grid);

    term_tt - term_xx - term_tx - term_pen + qv + qf
}
