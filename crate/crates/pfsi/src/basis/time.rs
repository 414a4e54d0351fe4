//! Periodic-in-time basis: 1, sin(2πkt/T), cos(2πkt/T) for k = 1..=m.

use super::fourier::Fourier1d;
use nalgebra::DMatrix;

/// The time basis with highest harmonic `m`; dimension `2m + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBasis {
    fourier: Fourier1d,
}

impl TimeBasis {
    pub fn new(period: f64, m: usize) -> Self {
        Self {
            fourier: Fourier1d::new(period, m),
        }
    }

    pub fn period(&self) -> f64 {
        self.fourier.period()
    }

    pub fn m(&self) -> usize {
        self.fourier.harmonics()
    }

    pub fn dim(&self) -> usize {
        self.fourier.dim()
    }

    pub fn fourier(&self) -> &Fourier1d {
        &self.fourier
    }

    pub fn eval(&self, j: usize, t: f64) -> f64 {
        self.fourier.eval(j, t)
    }

    /// Diagonal of the L2(0,T) Gram matrix: T for the constant, T/2 otherwise.
    pub fn gram(&self, j: usize) -> f64 {
        self.fourier.l2_gram(j)
    }

    /// G[j][l] = ∫ τ_j τ_l dt (diagonal).
    pub fn pairing_identity(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.dim(), |j, l| {
            if j == l {
                self.gram(j)
            } else {
                0.0
            }
        })
    }

    /// D[j][l] = ∫ τ_j' τ_l dt (antisymmetric).
    pub fn pairing_deriv(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim(), self.dim());
        for j in 0..self.dim() {
            if let Some((j2, f)) = self.fourier.deriv_map(j) {
                d[(j, j2)] = f * self.gram(j2);
            }
        }
        d
    }

    /// A[j][l] = ∫ (mean-free antiderivative of τ_j) τ_l dt (antisymmetric;
    /// row 0 is zero).
    pub fn pairing_antideriv(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.dim(), self.dim());
        for j in 1..self.dim() {
            let mut unit = vec![0.0; self.dim()];
            unit[j] = 1.0;
            let anti = self.fourier.antiderivative_mean_free(&unit);
            for (l, &c) in anti.iter().enumerate() {
                if c != 0.0 {
                    a[(j, l)] = c * self.gram(l);
                }
            }
        }
        a
    }
}
