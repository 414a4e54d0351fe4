//! Space-time spectral expansions and the collocation-grid machinery for
//! evaluating, projecting and multiplying them.
//!
//! Coefficient layout is always (x, z, t) for fluid quantities and (x, t)
//! for beam quantities, with the mode ordering of [`Fourier1d`].

use std::sync::Arc;

use ndarray::{Array2, Array3, Array4};

use super::beam::BeamBasis;
use super::fluid::FluidBasis;
use super::fourier::Fourier1d;
use super::grid::{apply_axis2, apply_axis3, apply_axis4, Grid1d};
use super::time::TimeBasis;
use crate::error::{Error, Result};

/// Derivative selector for [`differentiate`]-style operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deriv {
    T,
    X,
    Z,
    Xx,
    Tx,
}

fn deriv_matrix(f: &Fourier1d) -> Array2<f64> {
    let dim = f.dim();
    let mut d = Array2::zeros((dim, dim));
    for j in 0..dim {
        if let Some((j2, fac)) = f.deriv_map(j) {
            d[(j2, j)] = fac;
        }
    }
    d
}

fn synthesis_matrix(f: &Fourier1d, nodes: &[f64]) -> Array2<f64> {
    let mut m = Array2::zeros((nodes.len(), f.dim()));
    for (i, &x) in nodes.iter().enumerate() {
        for j in 0..f.dim() {
            m[(i, j)] = f.eval(j, x);
        }
    }
    m
}

/// Zero-pad or truncate a coefficient vector index range between two bands
/// of the same period (mode index meaning is band-independent).
fn resize_matrix(from_dim: usize, to_dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((to_dim, from_dim));
    for j in 0..from_dim.min(to_dim) {
        m[(j, j)] = 1.0;
    }
    m
}

// ---------------------------------------------------------------------------
// Expansions
// ---------------------------------------------------------------------------

/// Scalar trigonometric expansion on Q_T = Ω x (0,T).
#[derive(Debug, Clone)]
pub struct ScalarExpansion {
    pub fx: Fourier1d,
    pub fz: Fourier1d,
    pub ft: Fourier1d,
    pub coeff: Array3<f64>,
}

impl ScalarExpansion {
    pub fn zeros(fx: Fourier1d, fz: Fourier1d, ft: Fourier1d) -> Self {
        let coeff = Array3::zeros((fx.dim(), fz.dim(), ft.dim()));
        Self { fx, fz, ft, coeff }
    }

    pub fn eval(&self, x: f64, z: f64, t: f64) -> f64 {
        let mut s = 0.0;
        for jx in 0..self.fx.dim() {
            let vx = self.fx.eval(jx, x);
            for jz in 0..self.fz.dim() {
                let vz = self.fz.eval(jz, z);
                for jt in 0..self.ft.dim() {
                    s += self.coeff[(jx, jz, jt)] * vx * vz * self.ft.eval(jt, t);
                }
            }
        }
        s
    }

    pub fn differentiate(&self, which: Deriv) -> Self {
        let (m, axis) = match which {
            Deriv::X => (deriv_matrix(&self.fx), 0),
            Deriv::Z => (deriv_matrix(&self.fz), 1),
            Deriv::T => (deriv_matrix(&self.ft), 2),
            Deriv::Xx => {
                let d = deriv_matrix(&self.fx);
                (d.dot(&deriv_matrix(&self.fx)), 0)
            }
            Deriv::Tx => {
                let dx = self.differentiate(Deriv::X);
                return dx.differentiate(Deriv::T);
            }
        };
        Self {
            fx: self.fx.clone(),
            fz: self.fz.clone(),
            ft: self.ft.clone(),
            coeff: apply_axis3(&self.coeff, &m, axis),
        }
    }

    /// Re-express on different bands (zero-padding or truncating).
    pub fn resize(&self, fx: &Fourier1d, fz: &Fourier1d, ft: &Fourier1d) -> Self {
        let mut c = apply_axis3(&self.coeff, &resize_matrix(self.fx.dim(), fx.dim()), 0);
        c = apply_axis3(&c, &resize_matrix(self.fz.dim(), fz.dim()), 1);
        c = apply_axis3(&c, &resize_matrix(self.ft.dim(), ft.dim()), 2);
        Self {
            fx: fx.clone(),
            fz: fz.clone(),
            ft: ft.clone(),
            coeff: c,
        }
    }

    /// Exact squared L²(Q_T) norm from Parseval.
    pub fn norm_l2_sq(&self) -> f64 {
        let mut s = 0.0;
        for jx in 0..self.fx.dim() {
            for jz in 0..self.fz.dim() {
                for jt in 0..self.ft.dim() {
                    let g =
                        self.fx.l2_gram(jx) * self.fz.l2_gram(jz) * self.ft.l2_gram(jt);
                    s += self.coeff[(jx, jz, jt)].powi(2) * g;
                }
            }
        }
        s
    }
}

/// Vector trigonometric expansion on Q_T; component axis first.
#[derive(Debug, Clone)]
pub struct VectorExpansion {
    pub fx: Fourier1d,
    pub fz: Fourier1d,
    pub ft: Fourier1d,
    pub coeff: Array4<f64>,
}

impl VectorExpansion {
    pub fn zeros(fx: Fourier1d, fz: Fourier1d, ft: Fourier1d) -> Self {
        let coeff = Array4::zeros((2, fx.dim(), fz.dim(), ft.dim()));
        Self { fx, fz, ft, coeff }
    }

    pub fn component(&self, c: usize) -> ScalarExpansion {
        ScalarExpansion {
            fx: self.fx.clone(),
            fz: self.fz.clone(),
            ft: self.ft.clone(),
            coeff: self.coeff.index_axis(ndarray::Axis(0), c).to_owned(),
        }
    }

    pub fn from_components(a: ScalarExpansion, b: ScalarExpansion) -> Self {
        let mut coeff = Array4::zeros((2, a.fx.dim(), a.fz.dim(), a.ft.dim()));
        coeff.index_axis_mut(ndarray::Axis(0), 0).assign(&a.coeff);
        coeff.index_axis_mut(ndarray::Axis(0), 1).assign(&b.coeff);
        Self {
            fx: a.fx,
            fz: a.fz,
            ft: a.ft,
            coeff,
        }
    }

    pub fn eval(&self, x: f64, z: f64, t: f64) -> [f64; 2] {
        [self.component(0).eval(x, z, t), self.component(1).eval(x, z, t)]
    }

    pub fn differentiate(&self, which: Deriv) -> Self {
        let (m, axis) = match which {
            Deriv::X => (deriv_matrix(&self.fx), 1),
            Deriv::Z => (deriv_matrix(&self.fz), 2),
            Deriv::T => (deriv_matrix(&self.ft), 3),
            _ => panic!("unsupported vector derivative"),
        };
        Self {
            fx: self.fx.clone(),
            fz: self.fz.clone(),
            ft: self.ft.clone(),
            coeff: apply_axis4(&self.coeff, &m, axis),
        }
    }

    pub fn norm_l2_sq(&self) -> f64 {
        self.component(0).norm_l2_sq() + self.component(1).norm_l2_sq()
    }
}

/// Scalar trigonometric expansion on Γ_T = Γ x (0,T); layout (x, t).
#[derive(Debug, Clone)]
pub struct BeamExpansion {
    pub fx: Fourier1d,
    pub ft: Fourier1d,
    pub coeff: Array2<f64>,
}

impl BeamExpansion {
    pub fn zeros(fx: Fourier1d, ft: Fourier1d) -> Self {
        let coeff = Array2::zeros((fx.dim(), ft.dim()));
        Self { fx, ft, coeff }
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let mut s = 0.0;
        for jx in 0..self.fx.dim() {
            let vx = self.fx.eval(jx, x);
            for jt in 0..self.ft.dim() {
                s += self.coeff[(jx, jt)] * vx * self.ft.eval(jt, t);
            }
        }
        s
    }

    pub fn differentiate(&self, which: Deriv) -> Result<Self> {
        let coeff = match which {
            Deriv::X => apply_axis2(&self.coeff, &deriv_matrix(&self.fx), 0),
            Deriv::Xx => {
                let d = deriv_matrix(&self.fx);
                apply_axis2(&self.coeff, &d.dot(&d), 0)
            }
            Deriv::T => apply_axis2(&self.coeff, &deriv_matrix(&self.ft), 1),
            Deriv::Tx => {
                let dx = apply_axis2(&self.coeff, &deriv_matrix(&self.fx), 0);
                apply_axis2(&dx, &deriv_matrix(&self.ft), 1)
            }
            Deriv::Z => {
                return Err(Error::InputDomain(
                    "z-derivative requested for a beam field".into(),
                ))
            }
        };
        Ok(Self {
            fx: self.fx.clone(),
            ft: self.ft.clone(),
            coeff,
        })
    }

    pub fn norm_l2_sq(&self) -> f64 {
        let mut s = 0.0;
        for jx in 0..self.fx.dim() {
            for jt in 0..self.ft.dim() {
                s += self.coeff[(jx, jt)].powi(2) * self.fx.l2_gram(jx) * self.ft.l2_gram(jt);
            }
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Galerkin coefficient fields
// ---------------------------------------------------------------------------

/// Beam displacement/velocity in span{s_i(x) τ_j(t)}: coefficients (n, 2m+1).
#[derive(Debug, Clone)]
pub struct BeamField {
    pub basis: Arc<BeamBasis>,
    pub time: Arc<TimeBasis>,
    pub coeff: Array2<f64>,
}

impl BeamField {
    pub fn zeros(basis: Arc<BeamBasis>, time: Arc<TimeBasis>) -> Self {
        let coeff = Array2::zeros((basis.len(), time.dim()));
        Self { basis, time, coeff }
    }

    pub fn to_expansion(&self) -> BeamExpansion {
        // expansion[jx, jt] = Σ_i coeff[i, jt] * basis.coeff[i, jx]
        let coeff = self.basis.coeff().t().dot(&self.coeff);
        BeamExpansion {
            fx: self.basis.fourier().clone(),
            ft: self.time.fourier().clone(),
            coeff,
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        self.to_expansion().eval(x, t)
    }

    pub fn scaled_add(&mut self, a: f64, other: &BeamField) {
        self.coeff.scaled_add(a, &other.coeff);
    }

    pub fn scale(&mut self, a: f64) {
        self.coeff.mapv_inplace(|v| a * v);
    }
}

/// Fluid velocity in span{f_i(x,z) τ_j(t)}: coefficients (n_fluid, 2m+1).
#[derive(Debug, Clone)]
pub struct FluidField {
    pub basis: Arc<FluidBasis>,
    pub time: Arc<TimeBasis>,
    pub coeff: Array2<f64>,
}

impl FluidField {
    pub fn zeros(basis: Arc<FluidBasis>, time: Arc<TimeBasis>) -> Self {
        let coeff = Array2::zeros((basis.len(), time.dim()));
        Self { basis, time, coeff }
    }

    pub fn to_expansion(&self) -> VectorExpansion {
        let mut exp = VectorExpansion::zeros(
            self.basis.fx().clone(),
            self.basis.fz().clone(),
            self.time.fourier().clone(),
        );
        for (i, m) in self.basis.modes().iter().enumerate() {
            for jt in 0..self.time.dim() {
                exp.coeff[(m.comp, m.jx, m.jz, jt)] += self.coeff[(i, jt)];
            }
        }
        exp
    }

    /// Extract Galerkin coefficients from a tensor expansion (L² projection
    /// onto the span, assuming bands are compatible).
    pub fn from_expansion(
        exp: &VectorExpansion,
        basis: Arc<FluidBasis>,
        time: Arc<TimeBasis>,
    ) -> Self {
        let mut f = FluidField::zeros(basis.clone(), time.clone());
        for (i, m) in basis.modes().iter().enumerate() {
            if m.jx < exp.fx.dim() && m.jz < exp.fz.dim() {
                for jt in 0..time.dim().min(exp.ft.dim()) {
                    f.coeff[(i, jt)] = exp.coeff[(m.comp, m.jx, m.jz, jt)];
                }
            }
        }
        f
    }

    pub fn eval(&self, x: f64, z: f64, t: f64) -> [f64; 2] {
        let mut out = [0.0, 0.0];
        for (i, m) in self.basis.modes().iter().enumerate() {
            let s = self.basis.scalar_eval(i, x, z);
            for jt in 0..self.time.dim() {
                out[m.comp] += self.coeff[(i, jt)] * s * self.time.eval(jt, t);
            }
        }
        out
    }

    pub fn scaled_add(&mut self, a: f64, other: &FluidField) {
        self.coeff.scaled_add(a, &other.coeff);
    }

    pub fn scale(&mut self, a: f64) {
        self.coeff.mapv_inplace(|v| a * v);
    }

    /// Exact squared L²(Q_T) norm.
    pub fn norm_l2_sq(&self) -> f64 {
        let mut s = 0.0;
        for (i, _) in self.basis.modes().iter().enumerate() {
            for jt in 0..self.time.dim() {
                s += self.coeff[(i, jt)].powi(2) * self.basis.l2_gram(i) * self.time.gram(jt);
            }
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Work grids
// ---------------------------------------------------------------------------

/// Collocation grid on Q_T used for quadrature and pseudo-spectral products.
#[derive(Debug, Clone)]
pub struct WorkGrid {
    pub gx: Grid1d,
    pub gz: Grid1d,
    pub gt: Grid1d,
}

impl WorkGrid {
    pub fn new(gx: Grid1d, gz: Grid1d, gt: Grid1d) -> Self {
        Self { gx, gz, gt }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.gx.len(), self.gz.len(), self.gt.len())
    }

    pub fn cell_weight(&self) -> f64 {
        self.gx.weight() * self.gz.weight() * self.gt.weight()
    }

    /// Values of a scalar expansion on the grid; the expansion band must fit
    /// inside the grid band.
    pub fn scalar_values(&self, e: &ScalarExpansion) -> Array3<f64> {
        let sx = synthesis_matrix(&e.fx, self.gx.nodes());
        let sz = synthesis_matrix(&e.fz, self.gz.nodes());
        let st = synthesis_matrix(&e.ft, self.gt.nodes());
        let a = apply_axis3(&e.coeff, &sx, 0);
        let a = apply_axis3(&a, &sz, 1);
        apply_axis3(&a, &st, 2)
    }

    pub fn vector_values(&self, e: &VectorExpansion) -> Array4<f64> {
        let sx = synthesis_matrix(&e.fx, self.gx.nodes());
        let sz = synthesis_matrix(&e.fz, self.gz.nodes());
        let st = synthesis_matrix(&e.ft, self.gt.nodes());
        let a = apply_axis4(&e.coeff, &sx, 1);
        let a = apply_axis4(&a, &sz, 2);
        apply_axis4(&a, &st, 3)
    }

    /// Analysis transform: grid values to coefficients on the grid's own band.
    pub fn analyze(&self, values: &Array3<f64>) -> ScalarExpansion {
        let a = apply_axis3(values, self.gx.analysis(), 0);
        let a = apply_axis3(&a, self.gz.analysis(), 1);
        let coeff = apply_axis3(&a, self.gt.analysis(), 2);
        ScalarExpansion {
            fx: self.gx.fourier().clone(),
            fz: self.gz.fourier().clone(),
            ft: self.gt.fourier().clone(),
            coeff,
        }
    }

    /// Project grid values onto a target band: analysis then truncation.
    pub fn project(
        &self,
        values: &Array3<f64>,
        fx: &Fourier1d,
        fz: &Fourier1d,
        ft: &Fourier1d,
    ) -> ScalarExpansion {
        self.analyze(values).resize(fx, fz, ft)
    }

    /// ∫_{Q_T} values dV by the tensor trapezoid rule.
    pub fn integrate(&self, values: &Array3<f64>) -> f64 {
        values.sum() * self.cell_weight()
    }

    /// ∫_{Q_T} a·b dV for two scalar value grids.
    pub fn inner(&self, a: &Array3<f64>, b: &Array3<f64>) -> f64 {
        (a * b).sum() * self.cell_weight()
    }
}

/// Collocation grid on Γ_T (beam space-time cylinder); layout (x, t).
#[derive(Debug, Clone)]
pub struct BeamGrid {
    pub gx: Grid1d,
    pub gt: Grid1d,
}

impl BeamGrid {
    pub fn new(gx: Grid1d, gt: Grid1d) -> Self {
        Self { gx, gt }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.gx.len(), self.gt.len())
    }

    pub fn cell_weight(&self) -> f64 {
        self.gx.weight() * self.gt.weight()
    }

    pub fn values(&self, e: &BeamExpansion) -> Array2<f64> {
        let sx = synthesis_matrix(&e.fx, self.gx.nodes());
        let st = synthesis_matrix(&e.ft, self.gt.nodes());
        sx.dot(&e.coeff).dot(&st.t())
    }

    pub fn integrate(&self, values: &Array2<f64>) -> f64 {
        values.sum() * self.cell_weight()
    }

    pub fn inner(&self, a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        (a * b).sum() * self.cell_weight()
    }
}

// ---------------------------------------------------------------------------
// Dealiased products
// ---------------------------------------------------------------------------

/// Pointwise product of two (optionally three) value grids, computed on a
/// 2x-padded grid and truncated back to the band of the source grid, which
/// removes aliasing for quadratic and cubic products of band-limited inputs.
pub fn dealiased_product3(
    grid: &WorkGrid,
    a: &Array3<f64>,
    b: &Array3<f64>,
    c: Option<&Array3<f64>>,
) -> Result<Array3<f64>> {
    if a.shape() != b.shape() || c.is_some_and(|c| c.shape() != a.shape()) {
        return Err(Error::Config("operand grids do not conform".into()));
    }
    let ea = grid.analyze(a);
    let eb = grid.analyze(b);
    let pad = WorkGrid::new(
        Grid1d::new(
            Fourier1d::new(grid.gx.fourier().period(), 2 * grid.gx.fourier().harmonics()),
            2 * grid.gx.len(),
        ),
        Grid1d::new(
            Fourier1d::new(grid.gz.fourier().period(), 2 * grid.gz.fourier().harmonics()),
            2 * grid.gz.len(),
        ),
        Grid1d::new(
            Fourier1d::new(grid.gt.fourier().period(), 2 * grid.gt.fourier().harmonics()),
            2 * grid.gt.len(),
        ),
    );
    let mut prod = &pad.scalar_values(&ea) * &pad.scalar_values(&eb);
    if let Some(c) = c {
        let ec = grid.analyze(c);
        prod = &prod * &pad.scalar_values(&ec);
    }
    let truncated = pad.project(
        &prod,
        grid.gx.fourier(),
        grid.gz.fourier(),
        grid.gt.fourier(),
    );
    Ok(grid.scalar_values(&truncated))
}

/// One-dimensional variant of [`dealiased_product3`] for periodic samples.
pub fn dealiased_product1(
    grid: &Grid1d,
    a: &[f64],
    b: &[f64],
    c: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if a.len() != grid.len() || b.len() != grid.len() || c.is_some_and(|c| c.len() != grid.len()) {
        return Err(Error::Config("operand grids do not conform".into()));
    }
    let f = grid.fourier();
    let pad_f = Fourier1d::new(f.period(), 2 * f.harmonics());
    let pad = Grid1d::new(pad_f, 2 * grid.len());
    let up = |v: &[f64]| -> Vec<f64> {
        let col = Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap();
        let coeff = grid.analysis().dot(&col);
        let coeff_pad = resize_matrix(f.dim(), pad.fourier().dim()).dot(&coeff);
        synthesis_matrix(pad.fourier(), pad.nodes())
            .dot(&coeff_pad)
            .column(0)
            .to_vec()
    };
    let mut prod: Vec<f64> = up(a).iter().zip(up(b)).map(|(x, y)| x * y).collect();
    if let Some(c) = c {
        for (p, cv) in prod.iter_mut().zip(up(c)) {
            *p *= cv;
        }
    }
    // analysis on the padded grid, truncate, synthesize on the base grid
    let col = Array2::from_shape_vec((prod.len(), 1), prod).unwrap();
    let coeff = pad.analysis().dot(&col);
    let coeff_base = resize_matrix(pad.fourier().dim(), f.dim()).dot(&coeff);
    Ok(grid.synthesis().dot(&coeff_base).column(0).to_vec())
}
