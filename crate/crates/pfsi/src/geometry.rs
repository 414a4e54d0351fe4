//! Periodic rectangle geometry, z-periodization of the beam displacement,
//! and evaluation of fluid fields on the (possibly wrapped) beam curve.

use ndarray::{Array2, Array3};

use crate::basis::field::{BeamExpansion, VectorExpansion};
use crate::basis::BeamGrid;
use crate::error::{Error, Result};

/// Fixed periodic domain Ω = (0,L) x (−H,H) with time period T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub length: f64,
    pub half_height: f64,
    pub period: f64,
}

impl DomainSpec {
    pub fn new(length: f64, half_height: f64, period: f64) -> Result<Self> {
        if !(length > 0.0 && half_height > 0.0 && period > 0.0) {
            return Err(Error::Config(
                "domain length, half-height and period must be positive".into(),
            ));
        }
        Ok(Self {
            length,
            half_height,
            period,
        })
    }

    /// |Ω| = 2·L·H.
    pub fn measure(&self) -> f64 {
        2.0 * self.length * self.half_height
    }
}

/// Beam height wrapped into the fundamental strip [−H, H).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrappedHeight {
    pub eta_hat: f64,
    pub wind: i64,
}

/// Wrap a displacement value into [−H, H) by subtracting 2·wind·H.
pub fn wrap_eta(eta: f64, half_height: f64) -> Result<WrappedHeight> {
    if !eta.is_finite() {
        return Err(Error::InputDomain("non-finite displacement value".into()));
    }
    if !(half_height > 0.0) {
        return Err(Error::InputDomain("half-height must be positive".into()));
    }
    let two_h = 2.0 * half_height;
    let wind = ((eta + half_height) / two_h).floor();
    let mut eta_hat = eta - two_h * wind;
    // guard against rounding landing exactly on the excluded right endpoint
    if eta_hat >= half_height {
        eta_hat -= two_h;
        return Ok(WrappedHeight {
            eta_hat,
            wind: wind as i64 + 1,
        });
    }
    if eta_hat < -half_height {
        eta_hat += two_h;
        return Ok(WrappedHeight {
            eta_hat,
            wind: wind as i64 - 1,
        });
    }
    Ok(WrappedHeight {
        eta_hat,
        wind: wind as i64,
    })
}

/// Values of the fluid velocity along the wrapped beam curve, sampled on a
/// space-time grid over Γ x (0,T); layout (component, x, t).
#[derive(Debug, Clone)]
pub struct TraceField {
    pub values: Array3<f64>,
    pub eta_hat: Array2<f64>,
    pub wind: Array2<i64>,
}

impl TraceField {
    pub fn component(&self, c: usize) -> Array2<f64> {
        self.values.index_axis(ndarray::Axis(0), c).to_owned()
    }
}

/// Evaluate u(t, x, η̂(t,x)) on the nodes of `grid`, where η̂ wraps the
/// displacement into [−H, H). Exact for band-limited u since evaluation is
/// closed-form.
pub fn trace_velocity(
    u: &VectorExpansion,
    eta: &BeamExpansion,
    half_height: f64,
    grid: &BeamGrid,
) -> Result<TraceField> {
    if (u.ft.period() - eta.ft.period()).abs() > 1e-12 * u.ft.period().abs()
        || (u.fx.period() - eta.fx.period()).abs() > 1e-12 * u.fx.period().abs()
    {
        return Err(Error::Config(
            "velocity and displacement live on mismatched space/time periods".into(),
        ));
    }
    let (nx, nt) = grid.shape();
    let eta_vals = grid.values(eta);
    let mut eta_hat = Array2::zeros((nx, nt));
    let mut wind = Array2::zeros((nx, nt));
    for ix in 0..nx {
        for it in 0..nt {
            let w = wrap_eta(eta_vals[(ix, it)], half_height)?;
            eta_hat[(ix, it)] = w.eta_hat;
            wind[(ix, it)] = w.wind;
        }
    }

    // Semi-synthesis: contract the x and t axes onto the grid nodes once,
    // leaving the z mode axis to be evaluated at η̂ point by point.
    let dz = u.fz.dim();
    let mut semi = Array3::zeros((2, nx * nt, dz)); // (comp, point, jz)
    for comp in 0..2 {
        for jz in 0..dz {
            for ix in 0..nx {
                let x = grid.gx.nodes()[ix];
                for it in 0..nt {
                    let t = grid.gt.nodes()[it];
                    let mut s = 0.0;
                    for jx in 0..u.fx.dim() {
                        let vx = u.fx.eval(jx, x);
                        if vx == 0.0 {
                            continue;
                        }
                        for jt in 0..u.ft.dim() {
                            s += u.coeff[(comp, jx, jz, jt)] * vx * u.ft.eval(jt, t);
                        }
                    }
                    semi[(comp, ix * nt + it, jz)] = s;
                }
            }
        }
    }

    let mut values = Array3::zeros((2, nx, nt));
    for comp in 0..2 {
        for ix in 0..nx {
            for it in 0..nt {
                let zh = eta_hat[(ix, it)];
                let mut s = 0.0;
                for jz in 0..dz {
                    s += semi[(comp, ix * nt + it, jz)] * u.fz.eval(jz, zh);
                }
                values[(comp, ix, it)] = s;
            }
        }
    }
    Ok(TraceField {
        values,
        eta_hat,
        wind,
    })
}

/// Lower and upper boundary curves of the equivalent moving domain
/// Ω^η(t) = {η(t,x) < z < η(t,x)+2H}, sampled at the given abscissae.
pub fn moving_domain_map(
    eta: &BeamExpansion,
    half_height: f64,
    t: f64,
    xs: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let lower: Vec<f64> = xs.iter().map(|&x| eta.eval(x, t)).collect();
    let upper: Vec<f64> = lower.iter().map(|&v| v + 2.0 * half_height).collect();
    (lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Fourier1d, Grid1d};
    use approx::assert_abs_diff_eq;

    #[test]
    fn wrap_examples() {
        let w = wrap_eta(0.5, 1.0).unwrap();
        assert_eq!((w.eta_hat, w.wind), (0.5, 0));
        let w = wrap_eta(1.5, 1.0).unwrap();
        assert_eq!((w.eta_hat, w.wind), (-0.5, 1));
        let w = wrap_eta(-1.0, 1.0).unwrap();
        assert_eq!((w.eta_hat, w.wind), (-1.0, 0));
    }

    #[test]
    fn wrap_rejects_non_finite() {
        assert!(wrap_eta(f64::NAN, 1.0).is_err());
        assert!(wrap_eta(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn wrap_idempotent_and_shifts() {
        for &e in &[-7.3, -1.0, -0.999, 0.0, 0.5, 0.9999, 1.0, 2.5, 13.7] {
            let w = wrap_eta(e, 1.0).unwrap();
            assert!((-1.0..1.0).contains(&w.eta_hat), "eta_hat {}", w.eta_hat);
            let w2 = wrap_eta(w.eta_hat, 1.0).unwrap();
            assert_eq!(w2.wind, 0);
            assert_abs_diff_eq!(w2.eta_hat, w.eta_hat, epsilon = 0.0);
            let ws = wrap_eta(e + 2.0, 1.0).unwrap();
            assert_eq!(ws.wind, w.wind + 1);
            assert_abs_diff_eq!(ws.eta_hat, w.eta_hat, epsilon = 1e-14);
        }
    }

    fn beam_grid() -> BeamGrid {
        BeamGrid::new(
            Grid1d::new(Fourier1d::new(1.0, 4), 12),
            Grid1d::new(Fourier1d::new(1.0, 3), 8),
        )
    }

    #[test]
    fn trace_of_constant_is_constant() {
        let mut u = VectorExpansion::zeros(
            Fourier1d::new(1.0, 2),
            Fourier1d::new(2.0, 2),
            Fourier1d::new(1.0, 2),
        );
        u.coeff[(0, 0, 0, 0)] = 3.0;
        u.coeff[(1, 0, 0, 0)] = -1.5;
        let mut eta = BeamExpansion::zeros(Fourier1d::new(1.0, 2), Fourier1d::new(1.0, 2));
        eta.coeff[(1, 0)] = 0.4;
        let tr = trace_velocity(&u, &eta, 1.0, &beam_grid()).unwrap();
        for v in tr.component(0).iter() {
            assert_abs_diff_eq!(*v, 3.0, epsilon = 1e-13);
        }
        for v in tr.component(1).iter() {
            assert_abs_diff_eq!(*v, -1.5, epsilon = 1e-13);
        }
    }

    #[test]
    fn trace_sin_vanishes_on_flat_beam() {
        // u = (0, sin(πz/H)) with H = 1: fz over period 2H = 2, first sine mode
        let mut u = VectorExpansion::zeros(
            Fourier1d::new(1.0, 1),
            Fourier1d::new(2.0, 1),
            Fourier1d::new(1.0, 1),
        );
        u.coeff[(1, 0, 1, 0)] = 1.0;
        let eta = BeamExpansion::zeros(Fourier1d::new(1.0, 1), Fourier1d::new(1.0, 1));
        let tr = trace_velocity(&u, &eta, 1.0, &beam_grid()).unwrap();
        for v in tr.values.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn trace_matches_direct_evaluation() {
        let mut u = VectorExpansion::zeros(
            Fourier1d::new(1.0, 3),
            Fourier1d::new(2.0, 3),
            Fourier1d::new(1.0, 2),
        );
        for (i, v) in u.coeff.iter_mut().enumerate() {
            *v = ((i * 13 % 23) as f64 - 11.0) / 37.0;
        }
        let mut eta = BeamExpansion::zeros(Fourier1d::new(1.0, 2), Fourier1d::new(1.0, 2));
        eta.coeff[(0, 0)] = 0.7;
        eta.coeff[(1, 2)] = 1.9; // drives wrapping through the strip boundary
        eta.coeff[(4, 1)] = -0.6;
        let grid = beam_grid();
        let tr = trace_velocity(&u, &eta, 1.0, &grid).unwrap();
        for (ix, &x) in grid.gx.nodes().iter().enumerate() {
            for (it, &t) in grid.gt.nodes().iter().enumerate() {
                let w = wrap_eta(eta.eval(x, t), 1.0).unwrap();
                let want = u.eval(x, w.eta_hat, t);
                assert_abs_diff_eq!(tr.values[(0, ix, it)], want[0], epsilon = 1e-12);
                assert_abs_diff_eq!(tr.values[(1, ix, it)], want[1], epsilon = 1e-12);
                assert_eq!(tr.wind[(ix, it)], w.wind);
            }
        }
    }

    #[test]
    fn trace_invariant_under_full_strip_shift() {
        let mut u = VectorExpansion::zeros(
            Fourier1d::new(1.0, 2),
            Fourier1d::new(2.0, 2),
            Fourier1d::new(1.0, 1),
        );
        for (i, v) in u.coeff.iter_mut().enumerate() {
            *v = ((i % 7) as f64 - 3.0) * 0.21;
        }
        let mut eta = BeamExpansion::zeros(Fourier1d::new(1.0, 2), Fourier1d::new(1.0, 1));
        eta.coeff[(1, 1)] = 0.5;
        let mut eta_shift = eta.clone();
        eta_shift.coeff[(0, 0)] += 2.0; // + 2H
        let grid = beam_grid();
        let a = trace_velocity(&u, &eta, 1.0, &grid).unwrap();
        let b = trace_velocity(&u, &eta_shift, 1.0, &grid).unwrap();
        for (x, y) in a.values.iter().zip(b.values.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn moving_domain_bounds() {
        let eta = BeamExpansion::zeros(Fourier1d::new(1.0, 1), Fourier1d::new(1.0, 1));
        let (lo, hi) = moving_domain_map(&eta, 1.0, 0.0, &[0.0, 0.25, 0.5]);
        assert_eq!(lo, vec![0.0; 3]);
        assert_eq!(hi, vec![2.0; 3]);
    }
}
