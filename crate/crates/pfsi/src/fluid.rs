//! Penalized fluid momentum equation: find u in span{f_i(x,z)τ_j(t)} with
//!
//!   δ∫ u·∂tφ + ∫ ρũ·∂tφ + ∫ ρũ⊗ũ:∇φ + ∫ (ρ^γ+δρ^a)∇·φ − ∫ S(∇u):∇φ
//!   − δ∫ |u|²u·φ − ε∫ ∇ρ⊗φ:∇ũ + (ε/2)∫ (M−ρ)ũ·φ
//!   − (1/ε)∫_{Γ_T} (v − η̃_t e₂)·ψ = −∫ ρF·φ
//!
//! for every basis test φ, where ψ and v are traces on the lagged beam curve
//! η̃. The only nonlinearity in the unknown is the cubic damping; the system
//! is solved by Newton with an analytic Jacobian and a damped-Picard
//! fallback.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};

use crate::basis::field::{BeamGrid, FluidField, ScalarExpansion, VectorExpansion, WorkGrid};
use crate::basis::{FluidBasis, TimeBasis};
use crate::error::{Error, Result};
use crate::geometry::wrap_eta;
use crate::linalg;
use crate::structure::BeamState;

/// Physical and artificial parameters of the fluid momentum equation.
#[derive(Debug, Clone, Copy)]
pub struct FluidParams {
    /// adiabatic exponent γ > 1
    pub gamma: f64,
    /// artificial pressure exponent a ≥ 5
    pub a_exp: f64,
    /// artificial coefficient δ ≥ 0
    pub delta: f64,
    /// penalty / diffusion parameter ε > 0
    pub eps: f64,
    /// shear viscosity μ > 0
    pub mu: f64,
    /// bulk viscosity ζ > 0
    pub zeta: f64,
    /// mass level M = m₀/|Ω|
    pub m_level: f64,
}

impl FluidParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return Err(Error::Config(format!(
                "adiabatic exponent gamma must exceed 1 (got {})",
                self.gamma
            )));
        }
        if !(self.a_exp >= 5.0) {
            return Err(Error::Config(format!(
                "artificial pressure exponent a must be at least 5 (got {})",
                self.a_exp
            )));
        }
        if !(self.delta >= 0.0 && self.eps > 0.0 && self.mu > 0.0 && self.zeta > 0.0) {
            return Err(Error::Config(
                "require delta >= 0, eps > 0, mu > 0, zeta > 0".into(),
            ));
        }
        if !(self.m_level > 0.0) {
            return Err(Error::Config("mass level M must be positive".into()));
        }
        Ok(())
    }
}

/// Options controlling the nonlinear iteration.
#[derive(Debug, Clone, Copy)]
pub struct FluidSolveOptions {
    pub tol: f64,
    pub max_newton: usize,
    pub max_picard: usize,
}

impl Default for FluidSolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_newton: 40,
            max_picard: 400,
        }
    }
}

/// ∫ ∂_a s_i ∂_b s_k dy for two scalar mode shapes of the fluid basis,
/// computed from the closed-form derivative maps.
fn int_dd(basis: &FluidBasis, i: usize, a: usize, k: usize, b: usize) -> f64 {
    let mi = &basis.modes()[i];
    let mk = &basis.modes()[k];
    let dmap = |jx: usize, jz: usize, axis: usize| -> Option<(usize, usize, f64)> {
        if axis == 0 {
            basis.fx().deriv_map(jx).map(|(j2, f)| (j2, jz, f))
        } else {
            basis.fz().deriv_map(jz).map(|(j2, f)| (jx, j2, f))
        }
    };
    let (ix, iz, fi) = match dmap(mi.jx, mi.jz, a) {
        Some(v) => v,
        None => return 0.0,
    };
    let (kx, kz, fk) = match dmap(mk.jx, mk.jz, b) {
        Some(v) => v,
        None => return 0.0,
    };
    if ix != kx || iz != kz {
        return 0.0;
    }
    fi * fk * basis.fx().l2_gram(ix) * basis.fz().l2_gram(iz)
}

/// Gram-like matrix V[i,k] = ∫_Ω S(∇f_i) : ∇f_k dy with
/// S(∇u) = μ(∇u + ∇ᵀu − (∇·u)I) + ζ(∇·u)I.
pub fn assemble_viscous_form(basis: &FluidBasis, mu: f64, zeta: f64) -> DMatrix<f64> {
    let n = basis.len();
    let mut v = DMatrix::zeros(n, n);
    for i in 0..n {
        let ci = basis.modes()[i].comp;
        for k in 0..n {
            let ck = basis.modes()[k].comp;
            let mut val = 0.0;
            if ci == ck {
                val += mu * (int_dd(basis, i, 0, k, 0) + int_dd(basis, i, 1, k, 1));
            }
            val += mu * (int_dd(basis, i, ck, k, ci) - int_dd(basis, i, ci, k, ck));
            val += zeta * int_dd(basis, i, ci, k, ck);
            v[(i, k)] = val;
        }
    }
    v
}

/// Per-term weak residual of the fluid momentum equation, each entry indexed
/// by the test function (space mode i, time mode j) flattened time-fastest.
#[derive(Debug, Clone)]
pub struct FluidResidualReport {
    pub time_term: DVector<f64>,
    pub convection: DVector<f64>,
    pub pressure: DVector<f64>,
    pub viscous: DVector<f64>,
    pub cubic: DVector<f64>,
    pub eps_terms: DVector<f64>,
    pub penalty: DVector<f64>,
    pub forcing: DVector<f64>,
    pub total: DVector<f64>,
}

impl FluidResidualReport {
    pub fn max_total(&self) -> f64 {
        self.total.amax()
    }
}

/// Assembled system for one fluid solve with frozen data (ρ, ũ, η̃, F).
pub struct FluidSystem {
    basis: Arc<FluidBasis>,
    time: Arc<TimeBasis>,
    quad: WorkGrid,
    params: FluidParams,
    /// δ · time-pairing block of the unknown.
    a_time: DMatrix<f64>,
    /// viscous block V ⊗ time-identity (enters with minus sign).
    a_visc: DMatrix<f64>,
    /// (1/ε) · penalty trace Gram on the lagged curve (enters with minus).
    a_pen: DMatrix<f64>,
    /// all data terms of the weak form (fixed during the solve).
    b_data: DVector<f64>,
    /// named pieces of `b_data`, kept for per-term reporting.
    b_conv: DVector<f64>,
    b_pressure: DVector<f64>,
    b_eps: DVector<f64>,
    b_forcing: DVector<f64>,
    /// data part of the penalty term, kept separate for reporting.
    b_pen: DVector<f64>,
    scale: f64,
}

struct TestIndex {
    n: usize,
    dimt: usize,
}

impl TestIndex {
    fn flat(&self, i: usize, j: usize) -> usize {
        i * self.dimt + j
    }
    fn size(&self) -> usize {
        self.n * self.dimt
    }
}

impl FluidSystem {
    /// Build the system. `quad` must band-dominate every product appearing in
    /// the form (ρũ⊗ũ and |u|²u in particular); the same grid defines the
    /// quadrature sense in which pressure terms are evaluated.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        basis: Arc<FluidBasis>,
        time: Arc<TimeBasis>,
        quad: &WorkGrid,
        beam_grid: &BeamGrid,
        half_height: f64,
        rho: &ScalarExpansion,
        u_lag: &FluidField,
        eta_lag: &BeamState,
        forcing: &VectorExpansion,
        params: FluidParams,
    ) -> Result<Self> {
        params.validate()?;
        let idx = TestIndex {
            n: basis.len(),
            dimt: time.dim(),
        };
        let size = idx.size();
        let d = time.pairing_deriv();
        let idm = time.pairing_identity();

        // δ ∫ u·∂tφ : trial (i,j), test (k,l) → δ_{ik} gram_i ∫τ_j τ_l'
        let mut a_time = DMatrix::zeros(size, size);
        for i in 0..idx.n {
            let g = basis.l2_gram(i);
            for j in 0..idx.dimt {
                for l in 0..idx.dimt {
                    a_time[(idx.flat(i, l), idx.flat(i, j))] = params.delta * g * d[(l, j)];
                }
            }
        }

        let v = assemble_viscous_form(&basis, params.mu, params.zeta);
        let mut a_visc = DMatrix::zeros(size, size);
        for i in 0..idx.n {
            for k in 0..idx.n {
                if v[(i, k)] == 0.0 {
                    continue;
                }
                for j in 0..idx.dimt {
                    a_visc[(idx.flat(k, j), idx.flat(i, j))] = v[(i, k)] * idm[(j, j)];
                }
            }
        }

        // trace values of every scalar mode on the lagged wrapped curve
        let (nx, nt) = beam_grid.shape();
        let eta_vals = beam_grid.values(&eta_lag.eta.to_expansion());
        let mut tr = Array3::zeros((idx.n, nx, nt));
        for (ix, &x) in beam_grid.gx.nodes().iter().enumerate() {
            for it in 0..nt {
                let zh = wrap_eta(eta_vals[(ix, it)], half_height)?.eta_hat;
                for i in 0..idx.n {
                    tr[(i, ix, it)] = basis.scalar_eval(i, x, zh);
                }
            }
        }
        let tau: Array2<f64> = {
            let mut m = Array2::zeros((nt, idx.dimt));
            for (it, &t) in beam_grid.gt.nodes().iter().enumerate() {
                for j in 0..idx.dimt {
                    m[(it, j)] = time.eval(j, t);
                }
            }
            m
        };
        let w_beam = beam_grid.cell_weight();
        let mut a_pen = DMatrix::zeros(size, size);
        for i in 0..idx.n {
            let ci = basis.modes()[i].comp;
            for k in 0..=i {
                if basis.modes()[k].comp != ci {
                    continue;
                }
                // time profile of ∫_Γ tr_i tr_k dx
                let mut prof = vec![0.0; nt];
                for ix in 0..nx {
                    for (it, p) in prof.iter_mut().enumerate() {
                        *p += tr[(i, ix, it)] * tr[(k, ix, it)];
                    }
                }
                for j in 0..idx.dimt {
                    for l in 0..idx.dimt {
                        let mut s = 0.0;
                        for (it, p) in prof.iter().enumerate() {
                            s += p * tau[(it, j)] * tau[(it, l)];
                        }
                        let val = s * w_beam / params.eps;
                        a_pen[(idx.flat(k, l), idx.flat(i, j))] = val;
                        a_pen[(idx.flat(i, j), idx.flat(k, l))] = val;
                        if i != k {
                            a_pen[(idx.flat(i, l), idx.flat(k, j))] = val;
                            a_pen[(idx.flat(k, j), idx.flat(i, l))] = val;
                        }
                    }
                }
            }
        }

        // ---- data vector ----------------------------------------------
        let rho_vals = quad.scalar_values(rho);
        let ul_exp = u_lag.to_expansion();
        let ul_vals = [
            quad.scalar_values(&ul_exp.component(0)),
            quad.scalar_values(&ul_exp.component(1)),
        ];
        let gx = quad.gx.fourier().clone();
        let gz = quad.gz.fourier().clone();
        let gt = quad.gt.fourier().clone();
        if gx.harmonics() < basis.fx().harmonics()
            || gz.harmonics() < basis.fz().harmonics()
            || gt.harmonics() < time.m()
        {
            return Err(Error::Config(
                "fluid quadrature grid band is smaller than the trial band".into(),
            ));
        }
        let int_mode = |w: &ScalarExpansion, jx: usize, jz: usize, jt: usize| -> f64 {
            w.coeff[(jx, jz, jt)] * gx.l2_gram(jx) * gz.l2_gram(jz) * gt.l2_gram(jt)
        };
        let int_mode_d = |w: &ScalarExpansion, jx: usize, jz: usize, jt: usize, axis: usize| {
            match axis {
                0 => gx
                    .deriv_map(jx)
                    .map_or(0.0, |(j2, f)| f * int_mode(w, j2, jz, jt)),
                1 => gz
                    .deriv_map(jz)
                    .map_or(0.0, |(j2, f)| f * int_mode(w, jx, j2, jt)),
                _ => gt
                    .deriv_map(jt)
                    .map_or(0.0, |(j2, f)| f * int_mode(w, jx, jz, j2)),
            }
        };

        // analyzed coefficient mirrors of all data fields
        let w_mom = [
            quad.analyze(&(&rho_vals * &ul_vals[0])),
            quad.analyze(&(&rho_vals * &ul_vals[1])),
        ];
        let w_conv = [
            [
                quad.analyze(&(&rho_vals * &ul_vals[0] * &ul_vals[0])),
                quad.analyze(&(&rho_vals * &ul_vals[0] * &ul_vals[1])),
            ],
            [
                quad.analyze(&(&rho_vals * &ul_vals[1] * &ul_vals[0])),
                quad.analyze(&(&rho_vals * &ul_vals[1] * &ul_vals[1])),
            ],
        ];
        let w_press = {
            let p = rho_vals.mapv(|r| {
                let rp = r.max(0.0);
                rp.powf(params.gamma) + params.delta * rp.powf(params.a_exp)
            });
            quad.analyze(&p)
        };
        let w_eps = {
            use crate::basis::field::Deriv;
            let gr = [
                quad.scalar_values(&rho.differentiate(Deriv::X)),
                quad.scalar_values(&rho.differentiate(Deriv::Z)),
            ];
            let gu = |c: usize, axis| {
                let comp = ul_exp.component(c);
                quad.scalar_values(&comp.differentiate(axis))
            };
            use crate::basis::field::Deriv::{X, Z};
            [
                quad.analyze(&(&gr[0] * &gu(0, X) + &gr[1] * &gu(0, Z))),
                quad.analyze(&(&gr[0] * &gu(1, X) + &gr[1] * &gu(1, Z))),
            ]
        };
        let w_damp = {
            let m_minus = rho_vals.mapv(|r| params.m_level - r);
            [
                quad.analyze(&(&m_minus * &ul_vals[0])),
                quad.analyze(&(&m_minus * &ul_vals[1])),
            ]
        };
        let w_forc = [
            quad.analyze(&(&rho_vals * &quad.scalar_values(&forcing.component(0)))),
            quad.analyze(&(&rho_vals * &quad.scalar_values(&forcing.component(1)))),
        ];

        let mut b_conv = DVector::zeros(size);
        let mut b_pressure = DVector::zeros(size);
        let mut b_eps = DVector::zeros(size);
        let mut b_forcing = DVector::zeros(size);
        for (k, mk) in basis.modes().iter().enumerate() {
            let (jx, jz, ck) = (mk.jx, mk.jz, mk.comp);
            for l in 0..idx.dimt {
                let row = idx.flat(k, l);
                // ∫ ρũ·∂tφ + ∫ ρũ⊗ũ:∇φ (= Σ_a ∫ T_{a,ck} ∂_a(s_k) τ_l)
                b_conv[row] = int_mode_d(&w_mom[ck], jx, jz, l, 2)
                    + int_mode_d(&w_conv[0][ck], jx, jz, l, 0)
                    + int_mode_d(&w_conv[1][ck], jx, jz, l, 1);
                // ∫ (ρ^γ + δρ^a) ∇·φ
                b_pressure[row] = int_mode_d(&w_press, jx, jz, l, ck);
                // −ε ∫ (∇ρ·∇ũ_{ck}) s_k τ_l + (ε/2) ∫ (M−ρ) ũ_{ck} s_k τ_l
                b_eps[row] = -params.eps * int_mode(&w_eps[ck], jx, jz, l)
                    + 0.5 * params.eps * int_mode(&w_damp[ck], jx, jz, l);
                // ∫ ρF·φ
                b_forcing[row] = int_mode(&w_forc[ck], jx, jz, l);
            }
        }
        let b_data = &b_conv + &b_pressure + &b_eps + &b_forcing;

        // (1/ε) ∫_{Γ_T} η̃_t (ψ·e₂): only vertical tests see it
        let etat_vals = beam_grid.values(&eta_lag.eta_t.to_expansion());
        let mut b_pen = DVector::zeros(size);
        for (k, mk) in basis.modes().iter().enumerate() {
            if mk.comp != 1 {
                continue;
            }
            for l in 0..idx.dimt {
                let mut s = 0.0;
                for ix in 0..nx {
                    for it in 0..nt {
                        s += etat_vals[(ix, it)] * tr[(k, ix, it)] * tau[(it, l)];
                    }
                }
                b_pen[idx.flat(k, l)] = s * w_beam / params.eps;
            }
        }

        let scale = (&b_data + &b_pen).amax().max(1.0);
        Ok(Self {
            basis,
            time,
            quad: quad.clone(),
            params,
            a_time,
            a_visc,
            a_pen,
            b_data,
            b_conv,
            b_pressure,
            b_eps,
            b_forcing,
            b_pen,
            scale,
        })
    }

    fn idx(&self) -> TestIndex {
        TestIndex {
            n: self.basis.len(),
            dimt: self.time.dim(),
        }
    }

    pub fn field_from_vec(&self, c: &DVector<f64>) -> FluidField {
        let idx = self.idx();
        let mut f = FluidField::zeros(self.basis.clone(), self.time.clone());
        for i in 0..idx.n {
            for j in 0..idx.dimt {
                f.coeff[(i, j)] = c[idx.flat(i, j)];
            }
        }
        f
    }

    pub fn vec_from_field(&self, f: &FluidField) -> DVector<f64> {
        let idx = self.idx();
        DVector::from_fn(idx.size(), |r, _| f.coeff[(r / idx.dimt, r % idx.dimt)])
    }

    /// Project a vector-valued grid function onto every test f_k τ_l.
    fn project_tests(&self, vals: &[Array3<f64>; 2]) -> DVector<f64> {
        let idx = self.idx();
        let w = [self.quad.analyze(&vals[0]), self.quad.analyze(&vals[1])];
        let gx = self.quad.gx.fourier();
        let gz = self.quad.gz.fourier();
        let gt = self.quad.gt.fourier();
        let mut out = DVector::zeros(idx.size());
        for (k, mk) in self.basis.modes().iter().enumerate() {
            for l in 0..idx.dimt {
                out[idx.flat(k, l)] = w[mk.comp].coeff[(mk.jx, mk.jz, l)]
                    * gx.l2_gram(mk.jx)
                    * gz.l2_gram(mk.jz)
                    * gt.l2_gram(l);
            }
        }
        out
    }

    fn u_values(&self, c: &DVector<f64>) -> [Array3<f64>; 2] {
        let exp = self.field_from_vec(c).to_expansion();
        [
            self.quad.scalar_values(&exp.component(0)),
            self.quad.scalar_values(&exp.component(1)),
        ]
    }

    /// N(c)[(k,l)] = ∫ |u|² (u·f_k) τ_l (enters the form with −δ).
    fn cubic_vec(&self, uv: &[Array3<f64>; 2]) -> DVector<f64> {
        let sq = &(&uv[0] * &uv[0]) + &(&uv[1] * &uv[1]);
        self.project_tests(&[&sq * &uv[0], &sq * &uv[1]])
    }

    /// Residual of the weak form for coefficient vector c.
    pub fn residual(&self, c: &DVector<f64>) -> DVector<f64> {
        let uv = self.u_values(c);
        &self.a_time * c - &self.a_visc * c - &self.a_pen * c
            - self.cubic_vec(&uv) * self.params.delta
            + &self.b_data
            + &self.b_pen
    }

    /// Jacobian of the residual at c (analytic for the cubic term).
    pub fn jacobian(&self, c: &DVector<f64>) -> DMatrix<f64> {
        let idx = self.idx();
        let mut j = &self.a_time - &self.a_visc - &self.a_pen;
        if self.params.delta == 0.0 {
            return j;
        }
        let uv = self.u_values(c);
        let sq = &(&uv[0] * &uv[0]) + &(&uv[1] * &uv[1]);
        // directional derivative along trial f_iτ_m:
        //   |u|² f_iτ_m + 2 (u·f_iτ_m) u
        for (i, mi) in self.basis.modes().iter().enumerate() {
            let mode_exp = {
                let mut f = FluidField::zeros(self.basis.clone(), self.time.clone());
                f.coeff[(i, 0)] = 1.0;
                f.to_expansion().component(mi.comp)
            };
            let mode_space = self.quad.scalar_values(&mode_exp); // constant in t
            for m in 0..idx.dimt {
                let mut tvals = vec![0.0; self.quad.gt.len()];
                for (it, &t) in self.quad.gt.nodes().iter().enumerate() {
                    tvals[it] = self.time.eval(m, t);
                }
                let mut dir = [
                    Array3::zeros(self.quad.shape()),
                    Array3::zeros(self.quad.shape()),
                ];
                for ((ix, iz, it), &ms) in mode_space.indexed_iter() {
                    let phi = ms * tvals[it];
                    let udot = uv[mi.comp][(ix, iz, it)] * phi;
                    dir[mi.comp][(ix, iz, it)] += sq[(ix, iz, it)] * phi;
                    dir[0][(ix, iz, it)] += 2.0 * udot * uv[0][(ix, iz, it)];
                    dir[1][(ix, iz, it)] += 2.0 * udot * uv[1][(ix, iz, it)];
                }
                let col = self.project_tests(&dir) * (-self.params.delta);
                let ci = idx.flat(i, m);
                for r in 0..idx.size() {
                    j[(r, ci)] += col[r];
                }
            }
        }
        j
    }

    /// Per-term residual breakdown for diagnosis.
    pub fn residual_report(&self, c: &DVector<f64>) -> FluidResidualReport {
        let uv = self.u_values(c);
        let time_term = &self.a_time * c;
        let viscous = -(&self.a_visc * c);
        let penalty = -(&self.a_pen * c) + &self.b_pen;
        let cubic = -(self.cubic_vec(&uv) * self.params.delta);
        let total = &time_term + &viscous + &penalty + &cubic + &self.b_data;
        FluidResidualReport {
            time_term,
            convection: self.b_conv.clone(),
            pressure: self.b_pressure.clone(),
            viscous,
            cubic,
            eps_terms: self.b_eps.clone(),
            penalty,
            forcing: self.b_forcing.clone(),
            total,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Smallest eigenvalue of −sym(linear part); positive by coercivity.
    pub fn coercivity_margin(&self) -> f64 {
        let lin = &self.a_visc + &self.a_pen - &self.a_time;
        let sym = (&lin + lin.transpose()) * 0.5;
        sym.symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &v| a.min(v))
    }

    /// Newton iteration with backtracking, then damped Picard fallback.
    pub fn solve(&self, initial: &FluidField, opts: &FluidSolveOptions) -> Result<FluidField> {
        let mut c = self.vec_from_field(initial);
        let tol = opts.tol * self.scale;
        let mut history = Vec::new();
        let mut r = self.residual(&c);
        let mut rn = r.amax();
        history.push(rn);
        for _ in 0..opts.max_newton {
            if rn <= tol {
                return Ok(self.field_from_vec(&c));
            }
            let j = self.jacobian(&c);
            let dc = linalg::solve_dense(&j, &(-&r))?;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..10 {
                let cand = &c + &dc * step;
                let rc = self.residual(&cand);
                let rcn = rc.amax();
                if rcn < rn {
                    c = cand;
                    r = rc;
                    rn = rcn;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            history.push(rn);
            if !accepted {
                break;
            }
        }
        if rn <= tol {
            return Ok(self.field_from_vec(&c));
        }
        // damped Picard: lag the cubic term, relax
        let lin = &self.a_time - &self.a_visc - &self.a_pen;
        let lu = lin.clone().lu();
        let omega = 0.5;
        let mut stagnant = 0usize;
        for _ in 0..opts.max_picard {
            let uv = self.u_values(&c);
            let rhs = self.cubic_vec(&uv) * self.params.delta - &self.b_data - &self.b_pen;
            let cn = lu
                .solve(&rhs)
                .ok_or_else(|| Error::Internal("fluid linear part is singular".into()))?;
            c = &c * (1.0 - omega) + cn * omega;
            r = self.residual(&c);
            let prev = rn;
            rn = r.amax();
            history.push(rn);
            if rn <= tol {
                return Ok(self.field_from_vec(&c));
            }
            if rn > 0.9 * prev {
                stagnant += 1;
                if stagnant >= 10 {
                    break;
                }
            } else {
                stagnant = 0;
            }
        }
        Err(Error::NonlinearSolve { history })
    }
}

/// One-call interface: build the system and solve from the lagged velocity.
#[allow(clippy::too_many_arguments)]
pub fn solve_fluid(
    basis: Arc<FluidBasis>,
    time: Arc<TimeBasis>,
    quad: &WorkGrid,
    beam_grid: &BeamGrid,
    half_height: f64,
    rho: &ScalarExpansion,
    u_lag: &FluidField,
    eta_lag: &BeamState,
    forcing: &VectorExpansion,
    params: FluidParams,
    opts: &FluidSolveOptions,
) -> Result<FluidField> {
    let sys = FluidSystem::new(
        basis,
        time,
        quad,
        beam_grid,
        half_height,
        rho,
        u_lag,
        eta_lag,
        forcing,
        params,
    )?;
    sys.solve(u_lag, opts)
}

/// Weak residual of the momentum equation for an arbitrary candidate field.
#[allow(clippy::too_many_arguments)]
pub fn fluid_residual(
    u: &FluidField,
    quad: &WorkGrid,
    beam_grid: &BeamGrid,
    half_height: f64,
    rho: &ScalarExpansion,
    u_lag: &FluidField,
    eta_lag: &BeamState,
    forcing: &VectorExpansion,
    params: FluidParams,
) -> Result<FluidResidualReport> {
    let sys = FluidSystem::new(
        u.basis.clone(),
        u.time.clone(),
        quad,
        beam_grid,
        half_height,
        rho,
        u_lag,
        eta_lag,
        forcing,
        params,
    )?;
    let c = sys.vec_from_field(u);
    Ok(sys.residual_report(&c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Fourier1d, Grid1d};
    use crate::geometry::DomainSpec;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn domain() -> DomainSpec {
        DomainSpec::new(1.0, 1.0, 1.0).unwrap()
    }

    fn setup(n: usize, m: usize) -> (Arc<FluidBasis>, Arc<TimeBasis>, WorkGrid, BeamGrid) {
        let d = domain();
        let basis = Arc::new(FluidBasis::new(d.length, d.half_height, n));
        let time = Arc::new(TimeBasis::new(d.period, m));
        let kx = basis.fx().harmonics();
        let kz = basis.fz().harmonics();
        let quad = WorkGrid::new(
            Grid1d::new(Fourier1d::new(d.length, 4 * kx + 1), 8 * kx + 4),
            Grid1d::new(Fourier1d::new(2.0 * d.half_height, 4 * kz + 1), 8 * kz + 4),
            Grid1d::new(Fourier1d::new(d.period, 4 * m + 1), 8 * m + 4),
        );
        let beam_grid = BeamGrid::new(
            Grid1d::new(Fourier1d::new(d.length, 4 * kx + 2), 8 * kx + 6),
            Grid1d::new(Fourier1d::new(d.period, 4 * m + 2), 8 * m + 6),
        );
        (basis, time, quad, beam_grid)
    }

    fn params() -> FluidParams {
        FluidParams {
            gamma: 2.0,
            a_exp: 5.0,
            delta: 0.1,
            eps: 0.1,
            mu: 1.0,
            zeta: 1.0,
            m_level: 1.0,
        }
    }

    fn constant_rho(level: f64) -> ScalarExpansion {
        let mut r = ScalarExpansion::zeros(
            Fourier1d::new(1.0, 1),
            Fourier1d::new(2.0, 1),
            Fourier1d::new(1.0, 1),
        );
        r.coeff[(0, 0, 0)] = level;
        r
    }

    #[test]
    fn viscous_form_constant_modes_are_kernel_and_symmetric() {
        let (basis, ..) = setup(12, 1);
        let v = assemble_viscous_form(&basis, 1.3, 0.7);
        for k in 0..basis.len() {
            assert_abs_diff_eq!(v[(0, k)], 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(v[(k, 1)], 0.0, epsilon = 1e-14);
        }
        assert!((&v - v.transpose()).amax() < 1e-13);
    }

    #[test]
    fn viscous_form_matches_closed_form_for_shear_mode() {
        // u = (sin(2πx/L), 0): ⟨S(∇u),∇u⟩ = (μ+ζ)(2π/L)²·|Ω|/2
        let (basis, ..) = setup(12, 1);
        let (mu, zeta) = (1.3, 0.7);
        let v = assemble_viscous_form(&basis, mu, zeta);
        let i = basis
            .modes()
            .iter()
            .position(|m| m.comp == 0 && m.jx == 1 && m.jz == 0)
            .unwrap();
        let want = (mu + zeta) * (2.0 * PI).powi(2) * 2.0 / 2.0;
        assert_abs_diff_eq!(v[(i, i)], want, epsilon = 1e-12 * want);
    }

    #[test]
    fn quiescent_data_yields_zero_velocity() {
        let (basis, time, quad, beam_grid) = setup(8, 1);
        let rho = constant_rho(1.0);
        let u_lag = FluidField::zeros(basis.clone(), time.clone());
        let eta_lag = BeamState::zeros(
            Arc::new(crate::basis::BeamBasis::new(1.0, 3)),
            time.clone(),
        );
        let forcing = VectorExpansion::zeros(
            Fourier1d::new(1.0, 1),
            Fourier1d::new(2.0, 1),
            Fourier1d::new(1.0, 1),
        );
        let u = solve_fluid(
            basis,
            time,
            &quad,
            &beam_grid,
            1.0,
            &rho,
            &u_lag,
            &eta_lag,
            &forcing,
            params(),
            &FluidSolveOptions::default(),
        )
        .unwrap();
        for v in u.coeff.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn system_is_coercive() {
        let (basis, time, quad, beam_grid) = setup(10, 2);
        let rho = constant_rho(1.0);
        let u_lag = FluidField::zeros(basis.clone(), time.clone());
        let eta_lag = BeamState::zeros(
            Arc::new(crate::basis::BeamBasis::new(1.0, 3)),
            time.clone(),
        );
        let forcing = VectorExpansion::zeros(
            Fourier1d::new(1.0, 1),
            Fourier1d::new(2.0, 1),
            Fourier1d::new(1.0, 1),
        );
        let sys = FluidSystem::new(
            basis, time, &quad, &beam_grid, 1.0, &rho, &u_lag, &eta_lag, &forcing, params(),
        )
        .unwrap();
        assert!(sys.coercivity_margin() > 0.0);
    }

    #[test]
    fn solver_output_residual_is_small_with_general_data() {
        let (basis, time, quad, beam_grid) = setup(10, 2);
        let beam_basis = Arc::new(crate::basis::BeamBasis::new(1.0, 3));
        let mut rho = constant_rho(1.0);
        rho.coeff[(1, 0, 0)] = 0.05;
        rho.coeff[(0, 2, 1)] = 0.03;
        let mut u_lag = FluidField::zeros(basis.clone(), time.clone());
        for (i, v) in u_lag.coeff.iter_mut().enumerate() {
            *v = 0.02 * ((i as f64) * 0.7).sin();
        }
        let mut eta_lag = BeamState::zeros(beam_basis, time.clone());
        eta_lag.eta.coeff[(0, 1)] = 0.1;
        eta_lag.eta_t.coeff[(0, 2)] = 0.1 * 2.0 * PI;
        let mut forcing = VectorExpansion::zeros(
            Fourier1d::new(1.0, 1),
            Fourier1d::new(2.0, 1),
            Fourier1d::new(1.0, 1),
        );
        forcing.coeff[(1, 1, 0, 1)] = 0.05;
        let sys = FluidSystem::new(
            basis,
            time,
            &quad,
            &beam_grid,
            1.0,
            &rho,
            &u_lag,
            &eta_lag,
            &forcing,
            params(),
        )
        .unwrap();
        let u = sys.solve(&u_lag, &FluidSolveOptions::default()).unwrap();
        let c = sys.vec_from_field(&u);
        let rep = sys.residual_report(&c);
        assert!(
            rep.max_total() <= 1e-11 * sys.scale(),
            "residual {} scale {}",
            rep.max_total(),
            sys.scale()
        );
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let (basis, time, quad, beam_grid) = setup(6, 1);
        let rho = constant_rho(1.0);
        let mut u_lag = FluidField::zeros(basis.clone(), time.clone());
        u_lag.coeff[(2, 1)] = 0.3;
        let eta_lag = BeamState::zeros(
            Arc::new(crate::basis::BeamBasis::new(1.0, 2)),
            time.clone(),
        );
        let forcing = VectorExpansion::zeros(
            Fourier1d::new(1.0, 1),
            Fourier1d::new(2.0, 1),
            Fourier1d::new(1.0, 1),
        );
        let sys = FluidSystem::new(
            basis, time, &quad, &beam_grid, 1.0, &rho, &u_lag, &eta_lag, &forcing, params(),
        )
        .unwrap();
        let c = sys.vec_from_field(&u_lag) * 1.7;
        let j = sys.jacobian(&c);
        let h = 1e-6;
        for col in 0..c.len().min(8) {
            let mut cp = c.clone();
            cp[col] += h;
            let mut cm = c.clone();
            cm[col] -= h;
            let fd = (sys.residual(&cp) - sys.residual(&cm)) / (2.0 * h);
            for r in 0..c.len() {
                assert_abs_diff_eq!(j[(r, col)], fd[r], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn pressure_term_spot_check() {
        // ρ = M + 0.1 cos(2πx/L), γ=2, δ=0: p = ρ². Test mode φ = sin(2πx/L)e₁:
        // ∇·φ = (2π/L)cos(2πx/L); ∫ p ∇·φ = (2π/L)·2·M·0.1·(L/2)·2H·T
        let (basis, time, quad, beam_grid) = setup(10, 1);
        let mut rho = constant_rho(1.0);
        rho.coeff[(2, 0, 0)] = 0.1; // cos(2πx/L)
        let u_lag = FluidField::zeros(basis.clone(), time.clone());
        let eta_lag = BeamState::zeros(
            Arc::new(crate::basis::BeamBasis::new(1.0, 2)),
            time.clone(),
        );
        let forcing = VectorExpansion::zeros(
            Fourier1d::new(1.0, 1),
            Fourier1d::new(2.0, 1),
            Fourier1d::new(1.0, 1),
        );
        let mut p = params();
        p.delta = 0.0;
        let sys = FluidSystem::new(
            basis.clone(),
            time,
            &quad,
            &beam_grid,
            1.0,
            &rho,
            &u_lag,
            &eta_lag,
            &forcing,
            p,
        )
        .unwrap();
        let k = basis
            .modes()
            .iter()
            .position(|m| m.comp == 0 && m.jx == 1 && m.jz == 0)
            .unwrap();
        let idx = sys.idx();
        // only the pressure term is nonzero in the data for this setup
        let got = sys.b_data[idx.flat(k, 0)];
        let want = (2.0 * PI) * 2.0 * 1.0 * 0.1 * 0.5 * 2.0;
        assert_abs_diff_eq!(got, want, epsilon = 1e-12 * want);
    }

    #[test]
    fn cubic_damping_monotonicity() {
        // ⟨|u₁|²u₁ − |u₂|²u₂, u₁−u₂⟩ ≥ ¼ ∫ |u₁−u₂|⁴
        let (basis, time, quad, _) = setup(8, 1);
        for seed in 0..5u64 {
            let mut f1 = FluidField::zeros(basis.clone(), time.clone());
            let mut f2 = FluidField::zeros(basis.clone(), time.clone());
            for (i, v) in f1.coeff.iter_mut().enumerate() {
                *v = ((i as f64 + seed as f64) * 1.3).sin();
            }
            for (i, v) in f2.coeff.iter_mut().enumerate() {
                *v = ((i as f64 * 0.9 + seed as f64) * 2.1).cos() * 0.7;
            }
            let vals = |f: &FluidField| {
                let e = f.to_expansion();
                [
                    quad.scalar_values(&e.component(0)),
                    quad.scalar_values(&e.component(1)),
                ]
            };
            let (v1, v2) = (vals(&f1), vals(&f2));
            let s1 = &(&v1[0] * &v1[0]) + &(&v1[1] * &v1[1]);
            let s2 = &(&v2[0] * &v2[0]) + &(&v2[1] * &v2[1]);
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            for c in 0..2 {
                let diff = &v1[c] - &v2[c];
                lhs += quad.inner(&(&s1 * &v1[c] - &s2 * &v2[c]), &diff);
            }
            let d0 = &v1[0] - &v2[0];
            let d1 = &v1[1] - &v2[1];
            let dsq = &(&d0 * &d0) + &(&d1 * &d1);
            rhs += quad.inner(&dsq, &dsq);
            assert!(lhs >= 0.25 * rhs - 1e-10, "lhs {lhs} rhs {rhs}");
        }
    }
}
