//! Real trigonometric basis on a periodic interval.
//!
//! Mode ordering for `harmonics = K` (dimension `2K + 1`):
//! index 0 is the constant function 1, index `2k - 1` is `sin(2πkx/P)` and
//! index `2k` is `cos(2πkx/P)` for `k = 1..=K`.

/// A truncated real Fourier basis on an interval of length `period`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fourier1d {
    period: f64,
    harmonics: usize,
}

impl Fourier1d {
    pub fn new(period: f64, harmonics: usize) -> Self {
        assert!(period > 0.0, "period must be positive");
        Self { period, harmonics }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn harmonics(&self) -> usize {
        self.harmonics
    }

    pub fn dim(&self) -> usize {
        2 * self.harmonics + 1
    }

    /// Harmonic number of mode `j` (0 for the constant).
    pub fn harmonic_of(&self, j: usize) -> usize {
        j.div_ceil(2)
    }

    /// Angular frequency 2πk/P of mode `j`.
    pub fn omega(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.harmonic_of(j) as f64 / self.period
    }

    pub fn is_sin(&self, j: usize) -> bool {
        j % 2 == 1
    }

    pub fn eval(&self, j: usize, x: f64) -> f64 {
        debug_assert!(j < self.dim());
        if j == 0 {
            return 1.0;
        }
        let arg = self.omega(j) * x;
        if self.is_sin(j) {
            arg.sin()
        } else {
            arg.cos()
        }
    }

    /// L2 inner product of mode `j` with itself over one period.
    pub fn l2_gram(&self, j: usize) -> f64 {
        if j == 0 {
            self.period
        } else {
            self.period / 2.0
        }
    }

    /// The derivative of mode `j` expressed as `(index, factor)`:
    /// d/dx mode_j = factor * mode_index. Returns `None` for the constant.
    pub fn deriv_map(&self, j: usize) -> Option<(usize, f64)> {
        if j == 0 {
            return None;
        }
        let w = self.omega(j);
        if self.is_sin(j) {
            Some((j + 1, w)) // sin' = w cos
        } else {
            Some((j - 1, -w)) // cos' = -w sin
        }
    }

    /// Differentiate a coefficient vector in place-free form.
    pub fn differentiate(&self, coeff: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeff.len(), self.dim());
        let mut out = vec![0.0; self.dim()];
        for (j, &c) in coeff.iter().enumerate() {
            if let Some((j2, f)) = self.deriv_map(j) {
                out[j2] += f * c;
            }
        }
        out
    }

    /// Mean-free antiderivative of a coefficient vector.
    ///
    /// The constant mode of the input must vanish (an antiderivative of a
    /// constant is not periodic); the output has zero constant mode.
    pub fn antiderivative_mean_free(&self, coeff: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeff.len(), self.dim());
        debug_assert!(
            coeff[0].abs() < 1e-300 || coeff[0] == 0.0,
            "antiderivative of non-mean-free input"
        );
        let mut out = vec![0.0; self.dim()];
        for (j, &c) in coeff.iter().enumerate().skip(1) {
            let w = self.omega(j);
            if self.is_sin(j) {
                out[j + 1] -= c / w; // ∫ sin = -cos/w
            } else {
                out[j - 1] += c / w; // ∫ cos = sin/w
            }
        }
        out
    }

    /// Evaluate a coefficient vector at a point.
    pub fn eval_series(&self, coeff: &[f64], x: f64) -> f64 {
        coeff
            .iter()
            .enumerate()
            .map(|(j, c)| c * self.eval(j, x))
            .sum()
    }
}
