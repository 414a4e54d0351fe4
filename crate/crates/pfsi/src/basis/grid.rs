//! Uniform periodic collocation grids and the exact trigonometric
//! quadrature/transform pair attached to them.

use super::fourier::Fourier1d;
use ndarray::{Array2, Array3, Array4, Axis};

/// A uniform grid of `n` nodes on one period, together with the synthesis
/// (coefficients -> values) and analysis (values -> coefficients) matrices
/// for a [`Fourier1d`] basis.
///
/// With `n > 2 * harmonics` the trapezoidal rule is exact for every product
/// of two basis modes, so analysis∘synthesis is the identity.
#[derive(Debug, Clone)]
pub struct Grid1d {
    fourier: Fourier1d,
    nodes: Vec<f64>,
    /// n x dim
    synthesis: Array2<f64>,
    /// dim x n
    analysis: Array2<f64>,
}

impl Grid1d {
    pub fn new(fourier: Fourier1d, n: usize) -> Self {
        assert!(
            n > 2 * fourier.harmonics(),
            "grid needs more than 2K nodes for alias-free analysis (n={n}, K={})",
            fourier.harmonics()
        );
        let period = fourier.period();
        let dim = fourier.dim();
        let h = period / n as f64;
        let nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let mut synthesis = Array2::zeros((n, dim));
        let mut analysis = Array2::zeros((dim, n));
        for (i, &x) in nodes.iter().enumerate() {
            for j in 0..dim {
                let v = fourier.eval(j, x);
                synthesis[(i, j)] = v;
                analysis[(j, i)] = v * h / fourier.l2_gram(j);
            }
        }
        Self {
            fourier,
            nodes,
            synthesis,
            analysis,
        }
    }

    pub fn fourier(&self) -> &Fourier1d {
        &self.fourier
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Quadrature weight of every node (uniform trapezoid on a periodic
    /// interval), summing to the period.
    pub fn weight(&self) -> f64 {
        self.fourier.period() / self.len() as f64
    }

    pub fn synthesis(&self) -> &Array2<f64> {
        &self.synthesis
    }

    pub fn analysis(&self) -> &Array2<f64> {
        &self.analysis
    }
}

/// Contract axis `axis` of a rank-3 array with matrix `m` (out = m · a along
/// that axis); `m` is (new_len x old_len).
pub fn apply_axis3(a: &Array3<f64>, m: &Array2<f64>, axis: usize) -> Array3<f64> {
    let mut shape = [a.shape()[0], a.shape()[1], a.shape()[2]];
    assert_eq!(m.ncols(), shape[axis]);
    shape[axis] = m.nrows();
    let mut out = Array3::zeros(shape);
    for (mut out_lane, in_lane) in out
        .lanes_mut(Axis(axis))
        .into_iter()
        .zip(a.lanes(Axis(axis)))
    {
        for r in 0..m.nrows() {
            let mut s = 0.0;
            for c in 0..m.ncols() {
                s += m[(r, c)] * in_lane[c];
            }
            out_lane[r] = s;
        }
    }
    out
}

/// Same contraction on the trailing three axes of a rank-4 array
/// (axis 0 is the vector component).
pub fn apply_axis4(a: &Array4<f64>, m: &Array2<f64>, axis: usize) -> Array4<f64> {
    assert!(axis >= 1 && axis <= 3);
    let mut shape = [a.shape()[0], a.shape()[1], a.shape()[2], a.shape()[3]];
    assert_eq!(m.ncols(), shape[axis]);
    shape[axis] = m.nrows();
    let mut out = Array4::zeros(shape);
    for (mut out_lane, in_lane) in out
        .lanes_mut(Axis(axis))
        .into_iter()
        .zip(a.lanes(Axis(axis)))
    {
        for r in 0..m.nrows() {
            let mut s = 0.0;
            for c in 0..m.ncols() {
                s += m[(r, c)] * in_lane[c];
            }
            out_lane[r] = s;
        }
    }
    out
}

/// Contract axis `axis` of a rank-2 array with matrix `m`.
pub fn apply_axis2(a: &Array2<f64>, m: &Array2<f64>, axis: usize) -> Array2<f64> {
    match axis {
        0 => m.dot(a),
        1 => a.dot(&m.t()),
        _ => panic!("axis out of range"),
    }
}
