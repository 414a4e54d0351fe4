//! Fluid velocity basis on the torus Ω = (0, L) x (-H, H): real trigonometric
//! tensor modes times the unit vectors e1, e2, ordered by increasing
//! wavenumber. The first two members are the constant fields e1 and e2.

use super::fourier::Fourier1d;

/// One vector-valued basis field: component `comp` carries the scalar mode
/// mode_x(jx) * mode_z(jz), the other component is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FluidMode {
    pub comp: usize,
    pub jx: usize,
    pub jz: usize,
}

#[derive(Debug, Clone)]
pub struct FluidBasis {
    length: f64,
    half_height: f64,
    fx: Fourier1d,
    fz: Fourier1d,
    modes: Vec<FluidMode>,
}

impl FluidBasis {
    pub fn new(length: f64, half_height: f64, n: usize) -> Self {
        assert!(n >= 1);
        // Grow the harmonic cap until enough (mode, component) pairs exist.
        let mut cap = 1usize;
        loop {
            let count = (2 * cap + 1) * (2 * cap + 1) * 2;
            if count >= n {
                break;
            }
            cap += 1;
        }
        let fx = Fourier1d::new(length, cap);
        let fz = Fourier1d::new(2.0 * half_height, cap);

        // Sort scalar modes by |wavenumber|², deterministic tie-break.
        let mut scalar: Vec<(f64, usize, usize)> = Vec::new();
        for jx in 0..fx.dim() {
            for jz in 0..fz.dim() {
                let w2 = fx.omega(jx).powi(2) + fz.omega(jz).powi(2);
                scalar.push((w2, jx, jz));
            }
        }
        scalar.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut modes = Vec::with_capacity(n);
        'outer: for (_, jx, jz) in scalar {
            for comp in 0..2 {
                modes.push(FluidMode { comp, jx, jz });
                if modes.len() == n {
                    break 'outer;
                }
            }
        }

        // Shrink the Fourier handles to the harmonics actually used.
        let kx = modes
            .iter()
            .map(|m| fx.harmonic_of(m.jx))
            .max()
            .unwrap_or(0);
        let kz = modes
            .iter()
            .map(|m| fz.harmonic_of(m.jz))
            .max()
            .unwrap_or(0);
        Self {
            length,
            half_height,
            fx: Fourier1d::new(length, kx.max(1)),
            fz: Fourier1d::new(2.0 * half_height, kz.max(1)),
            modes,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn half_height(&self) -> f64 {
        self.half_height
    }

    /// |Ω| = 2·L·H.
    pub fn domain_measure(&self) -> f64 {
        2.0 * self.length * self.half_height
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn fx(&self) -> &Fourier1d {
        &self.fx
    }

    pub fn fz(&self) -> &Fourier1d {
        &self.fz
    }

    pub fn modes(&self) -> &[FluidMode] {
        &self.modes
    }

    /// Scalar factor of basis field `i` at (x, z).
    pub fn scalar_eval(&self, i: usize, x: f64, z: f64) -> f64 {
        let m = self.modes[i];
        self.fx.eval(m.jx, x) * self.fz.eval(m.jz, z)
    }

    /// Vector value of basis field `i` at (x, z).
    pub fn eval(&self, i: usize, x: f64, z: f64) -> [f64; 2] {
        let m = self.modes[i];
        let s = self.scalar_eval(i, x, z);
        if m.comp == 0 {
            [s, 0.0]
        } else {
            [0.0, s]
        }
    }

    /// L²(Ω) norm squared of basis field `i`.
    pub fn l2_gram(&self, i: usize) -> f64 {
        let m = self.modes[i];
        self.fx.l2_gram(m.jx) * self.fz.l2_gram(m.jz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_two_members_are_constants() {
        let b = FluidBasis::new(1.0, 1.0, 10);
        assert_eq!(
            b.modes()[0],
            FluidMode {
                comp: 0,
                jx: 0,
                jz: 0
            }
        );
        assert_eq!(
            b.modes()[1],
            FluidMode {
                comp: 1,
                jx: 0,
                jz: 0
            }
        );
        assert_eq!(b.eval(0, 0.3, -0.7), [1.0, 0.0]);
        assert_eq!(b.eval(1, 0.3, -0.7), [0.0, 1.0]);
    }

    #[test]
    fn pairwise_l2_orthogonal_against_dense_quadrature() {
        let l = 1.0;
        let h = 0.8;
        let b = FluidBasis::new(l, h, 10);
        let n = 256;
        let (hx, hz) = (l / n as f64, 2.0 * h / n as f64);
        for i in 0..10 {
            for k in 0..10 {
                let mut s = 0.0;
                for p in 0..n {
                    for q in 0..n {
                        let (x, z) = (p as f64 * hx, q as f64 * hz - h);
                        let a = b.eval(i, x, z);
                        let c = b.eval(k, x, z);
                        s += (a[0] * c[0] + a[1] * c[1]) * hx * hz;
                    }
                }
                let want = if i == k { b.l2_gram(i) } else { 0.0 };
                assert_abs_diff_eq!(s, want, epsilon = 1e-12 * b.domain_measure().max(1.0));
            }
        }
    }
}
