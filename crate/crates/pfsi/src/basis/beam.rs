//! Beam displacement basis on Γ = (0, L): smooth periodic functions that
//! vanish at x = 0, orthonormal in the full H² inner product
//! (u, v) = ∫ (uv + u'v' + u''v'').
//!
//! Generators are sin(2πkx/L) and cos(2πkx/L) - 1, interleaved by harmonic
//! and Gram-Schmidt orthonormalized. Every generator vanishes at x = 0, so
//! the orthonormalized functions do too.

use super::fourier::Fourier1d;
use ndarray::Array2;
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct BeamBasis {
    length: f64,
    n: usize,
    fourier: Fourier1d,
    /// n x dim rows of Fourier coefficients, one row per basis function.
    coeff: Array2<f64>,
}

impl BeamBasis {
    pub fn new(length: f64, n: usize) -> Self {
        assert!(n >= 1, "beam basis needs at least one function");
        let k_max = n.div_ceil(2);
        let fourier = Fourier1d::new(length, k_max);
        let dim = fourier.dim();

        // Generators interleaved: sin_1, cos_1 - 1, sin_2, cos_2 - 1, ...
        let mut gens: Vec<Vec<f64>> = Vec::with_capacity(n);
        for k in 1..=k_max {
            let mut s = vec![0.0; dim];
            s[2 * k - 1] = 1.0;
            gens.push(s);
            if gens.len() < n {
                let mut c = vec![0.0; dim];
                c[2 * k] = 1.0;
                c[0] = -1.0;
                gens.push(c);
            }
        }
        gens.truncate(n);

        // H² inner product is diagonal in Fourier coefficients.
        let h2_diag: Vec<f64> = (0..dim)
            .map(|j| {
                let w2 = fourier.omega(j).powi(2);
                fourier.l2_gram(j) * (1.0 + w2 + w2 * w2)
            })
            .collect();
        let ip = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .zip(&h2_diag)
                .map(|((x, y), d)| x * y * d)
                .sum()
        };

        // Modified Gram-Schmidt with a second orthogonalization pass.
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(n);
        for mut g in gens {
            for _ in 0..2 {
                for q in &ortho {
                    let p = ip(&g, q);
                    for (gi, qi) in g.iter_mut().zip(q) {
                        *gi -= p * qi;
                    }
                }
            }
            let nrm = ip(&g, &g).sqrt();
            assert!(nrm > 1e-12, "beam basis generators became dependent");
            for gi in &mut g {
                *gi /= nrm;
            }
            ortho.push(g);
        }

        let mut coeff = Array2::zeros((n, dim));
        for (i, row) in ortho.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                coeff[(i, j)] = c;
            }
        }
        Self {
            length,
            n,
            fourier,
            coeff,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn fourier(&self) -> &Fourier1d {
        &self.fourier
    }

    /// Fourier coefficient rows of the basis functions.
    pub fn coeff(&self) -> &Array2<f64> {
        &self.coeff
    }

    pub fn eval(&self, i: usize, x: f64) -> f64 {
        (0..self.fourier.dim())
            .map(|j| self.coeff[(i, j)] * self.fourier.eval(j, x))
            .sum()
    }

    /// Fourier coefficients of the `order`-th derivative of s_i.
    pub fn deriv_coeff(&self, i: usize, order: usize) -> Vec<f64> {
        let mut c: Vec<f64> = self.coeff.row(i).to_vec();
        for _ in 0..order {
            c = self.fourier.differentiate(&c);
        }
        c
    }

    /// Gram matrix ∫ s_i^(d) s_k^(d) dx for derivative order `d`.
    pub fn gram_deriv(&self, d: usize) -> DMatrix<f64> {
        let dim = self.fourier.dim();
        let rows: Vec<Vec<f64>> = (0..self.n).map(|i| self.deriv_coeff(i, d)).collect();
        DMatrix::from_fn(self.n, self.n, |i, k| {
            (0..dim)
                .map(|j| rows[i][j] * rows[k][j] * self.fourier.l2_gram(j))
                .sum()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_function_is_sine() {
        let b = BeamBasis::new(2.0, 1);
        // s_1 ∝ sin(2πx/L): check proportionality at a few points.
        let r = b.eval(0, 0.25) / (2.0 * std::f64::consts::PI * 0.25 / 2.0).sin();
        for &x in &[0.1, 0.4, 0.9, 1.7] {
            let s = (2.0 * std::f64::consts::PI * x / 2.0).sin();
            assert_abs_diff_eq!(b.eval(0, x), r * s, epsilon = 1e-13);
        }
    }

    #[test]
    fn vanish_at_origin() {
        let b = BeamBasis::new(1.0, 7);
        for i in 0..7 {
            assert!(b.eval(i, 0.0).abs() <= 1e-14);
            // periodicity gives the same at x = L
            assert!(b.eval(i, 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn h2_gram_is_identity_against_dense_quadrature() {
        let l = 1.3;
        let b = BeamBasis::new(l, 6);
        let n = 10_000;
        let h = l / n as f64;
        for i in 0..6 {
            for k in 0..6 {
                let mut s = 0.0;
                let di1 = b.deriv_coeff(i, 1);
                let dk1 = b.deriv_coeff(k, 1);
                let di2 = b.deriv_coeff(i, 2);
                let dk2 = b.deriv_coeff(k, 2);
                for q in 0..n {
                    let x = q as f64 * h;
                    let v = b.eval(i, x) * b.eval(k, x)
                        + b.fourier().eval_series(&di1, x) * b.fourier().eval_series(&dk1, x)
                        + b.fourier().eval_series(&di2, x) * b.fourier().eval_series(&dk2, x);
                    s += v * h;
                }
                let want = if i == k { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(s, want, epsilon = 1e-10);
            }
        }
    }
}
