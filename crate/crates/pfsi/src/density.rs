//! Time-periodic damped continuity equation
//!     ∂tρ + ∇·(ρu) − εΔρ + ερ = εM
//! on the fully periodic box Ω x (0,T), solved as a space-time Fourier
//! Galerkin system in the density coefficients.

use ndarray::Array3;

use crate::basis::field::{ScalarExpansion, VectorExpansion, WorkGrid};
use crate::basis::{Fourier1d, Grid1d};
use crate::error::{Error, Result};
use crate::geometry::DomainSpec;
use crate::linalg;

/// Parameters for one density solve.
#[derive(Debug, Clone, Copy)]
pub struct DensitySolveOptions {
    /// Damping/diffusion coefficient ε (also the penalty parameter upstream).
    pub eps: f64,
    /// Total mass m₀; the source level is M = m₀/|Ω|.
    pub mass: f64,
    /// Relative linear-solver tolerance.
    pub tol: f64,
    /// Maximum Krylov iterations.
    pub max_iters: usize,
}

impl DensitySolveOptions {
    pub fn new(eps: f64, mass: f64) -> Self {
        Self {
            eps,
            mass,
            tol: 1e-12,
            max_iters: 400,
        }
    }
}

/// Solved density: spectral coefficients plus collocation values and
/// mass/positivity metadata.
#[derive(Debug, Clone)]
pub struct DensityField {
    pub expansion: ScalarExpansion,
    pub values: Array3<f64>,
    pub grid: WorkGrid,
    /// ∫_Ω ρ(t_k) dy at each time node of `grid`.
    pub slice_mass: Vec<f64>,
    pub min_value: f64,
    pub warnings: Vec<String>,
}

/// Bands and grids for a density solve: the density band, and a work grid
/// whose band contains products of density and velocity exactly.
#[derive(Debug, Clone)]
pub struct DensityDiscretization {
    pub fx: Fourier1d,
    pub fz: Fourier1d,
    pub ft: Fourier1d,
    pub grid: WorkGrid,
}

impl DensityDiscretization {
    /// `bands` = (Kx, Kz, Kt) harmonics retained for ρ; the work grid band is
    /// the sum of the density and velocity bands so that ρ·u is band-exact.
    pub fn new(domain: &DomainSpec, bands: (usize, usize, usize), u: &VectorExpansion) -> Self {
        let fx = Fourier1d::new(domain.length, bands.0);
        let fz = Fourier1d::new(2.0 * domain.half_height, bands.1);
        let ft = Fourier1d::new(domain.period, bands.2);
        let mk = |f: &Fourier1d, extra: usize| {
            let band = f.harmonics() + extra;
            Grid1d::new(Fourier1d::new(f.period(), band), 2 * band + 2)
        };
        let grid = WorkGrid::new(
            mk(&fx, u.fx.harmonics()),
            mk(&fz, u.fz.harmonics()),
            mk(&ft, u.ft.harmonics()),
        );
        Self { fx, fz, ft, grid }
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.fx.dim(), self.fz.dim(), self.ft.dim())
    }

    fn unknowns(&self) -> usize {
        let (a, b, c) = self.dims();
        a * b * c
    }
}

fn pack(c: &Array3<f64>) -> Vec<f64> {
    c.iter().copied().collect()
}

fn unpack(v: &[f64], disc: &DensityDiscretization) -> Array3<f64> {
    Array3::from_shape_vec(disc.dims(), v.to_vec()).expect("shape mismatch")
}

/// Exact Galerkin projection of ∇·(ρu) onto the density band: the product is
/// formed on the band-exact work grid, analyzed there, differentiated in
/// coefficient space, and truncated.
fn div_rho_u(
    disc: &DensityDiscretization,
    rho: &ScalarExpansion,
    u_vals: &(Array3<f64>, Array3<f64>),
) -> Array3<f64> {
    use crate::basis::field::Deriv;
    let rv = disc.grid.scalar_values(rho);
    let mx = disc.grid.analyze(&(&rv * &u_vals.0));
    let mz = disc.grid.analyze(&(&rv * &u_vals.1));
    let d = &mx.differentiate(Deriv::X).coeff + &mz.differentiate(Deriv::Z).coeff;
    let full = ScalarExpansion {
        fx: disc.grid.gx.fourier().clone(),
        fz: disc.grid.gz.fourier().clone(),
        ft: disc.grid.gt.fourier().clone(),
        coeff: d,
    };
    full.resize(&disc.fx, &disc.fz, &disc.ft).coeff
}

/// Apply the full operator L ρ = ∂tρ + P[∇·(ρu)] − εΔρ + ερ in coefficient
/// space.
fn apply_operator(
    disc: &DensityDiscretization,
    eps: f64,
    u_vals: &(Array3<f64>, Array3<f64>),
    c: &[f64],
) -> Vec<f64> {
    let coeff = unpack(c, disc);
    let rho = ScalarExpansion {
        fx: disc.fx.clone(),
        fz: disc.fz.clone(),
        ft: disc.ft.clone(),
        coeff,
    };
    let mut out = div_rho_u(disc, &rho, u_vals);
    let (dx, dz, dt) = disc.dims();
    for jx in 0..dx {
        for jz in 0..dz {
            let sym = eps * (1.0 + disc.fx.omega(jx).powi(2) + disc.fz.omega(jz).powi(2));
            for jt in 0..dt {
                out[(jx, jz, jt)] += sym * rho.coeff[(jx, jz, jt)];
            }
            // time derivative couples the (sin_k, cos_k) pair
            let mut k = 1;
            while 2 * k <= dt - 1 {
                let w = disc.ft.omega(2 * k);
                let s = rho.coeff[(jx, jz, 2 * k - 1)];
                let cc = rho.coeff[(jx, jz, 2 * k)];
                // ∂t(s·sin + c·cos) = s·ω·cos − c·ω·sin
                out[(jx, jz, 2 * k - 1)] += -w * cc;
                out[(jx, jz, 2 * k)] += w * s;
                k += 1;
            }
        }
    }
    pack(&out)
}

/// Apply the exact inverse of the constant-coefficient part
/// A = ∂t − εΔ + ε (2x2 time blocks per spatial mode).
fn apply_preconditioner(disc: &DensityDiscretization, eps: f64, r: &[f64]) -> Vec<f64> {
    let coeff = unpack(r, disc);
    let mut out = coeff.clone();
    let (dx, dz, dt) = disc.dims();
    for jx in 0..dx {
        for jz in 0..dz {
            let d = eps * (1.0 + disc.fx.omega(jx).powi(2) + disc.fz.omega(jz).powi(2));
            out[(jx, jz, 0)] = coeff[(jx, jz, 0)] / d;
            let mut k = 1;
            while 2 * k <= dt - 1 {
                let w = disc.ft.omega(2 * k);
                let det = d * d + w * w;
                let rs = coeff[(jx, jz, 2 * k - 1)];
                let rc = coeff[(jx, jz, 2 * k)];
                // invert [[d, −w], [w, d]]
                out[(jx, jz, 2 * k - 1)] = (d * rs + w * rc) / det;
                out[(jx, jz, 2 * k)] = (-w * rs + d * rc) / det;
                k += 1;
            }
        }
    }
    pack(&out)
}

const DENSE_FALLBACK_CAP: usize = 3000;

/// Solve the damped continuity equation for the given velocity field.
pub fn solve_density(
    u: &VectorExpansion,
    domain: &DomainSpec,
    bands: (usize, usize, usize),
    opts: &DensitySolveOptions,
) -> Result<DensityField> {
    if !(opts.eps > 0.0) {
        return Err(Error::Config("density damping eps must be positive".into()));
    }
    if !(opts.mass > 0.0) {
        return Err(Error::Config("total mass must be positive".into()));
    }
    let disc = DensityDiscretization::new(domain, bands, u);
    let big_m = opts.mass / domain.measure();
    let u_vals = (
        disc.grid.scalar_values(&u.component(0)),
        disc.grid.scalar_values(&u.component(1)),
    );

    // RHS: εM on the constant mode.
    let n = disc.unknowns();
    let mut b = vec![0.0; n];
    b[0] = opts.eps * big_m;

    let pb = apply_preconditioner(&disc, opts.eps, &b);
    let op = |c: &[f64]| {
        let lc = apply_operator(&disc, opts.eps, &u_vals, c);
        apply_preconditioner(&disc, opts.eps, &lc)
    };
    // warm start from the constant solution ρ ≡ M
    let mut x0 = vec![0.0; n];
    x0[0] = big_m;
    let krylov = linalg::gmres(&op, &pb, Some(&x0), opts.tol, 60, opts.max_iters);

    let coeff_vec = match krylov {
        Ok(res) => res.solution,
        Err(err) => {
            if n > DENSE_FALLBACK_CAP {
                return Err(err);
            }
            // assemble the dense operator column by column and solve directly
            let mut a = nalgebra::DMatrix::zeros(n, n);
            let mut e = vec![0.0; n];
            for j in 0..n {
                e[j] = 1.0;
                let col = apply_operator(&disc, opts.eps, &u_vals, &e);
                for i in 0..n {
                    a[(i, j)] = col[i];
                }
                e[j] = 0.0;
            }
            let rhs = nalgebra::DVector::from_column_slice(&b);
            linalg::solve_dense(&a, &rhs)?.iter().copied().collect()
        }
    };

    let expansion = ScalarExpansion {
        fx: disc.fx.clone(),
        fz: disc.fz.clone(),
        ft: disc.ft.clone(),
        coeff: unpack(&coeff_vec, &disc),
    };
    let values = disc.grid.scalar_values(&expansion);
    let slice_weight = disc.grid.gx.weight() * disc.grid.gz.weight();
    let nt = disc.grid.gt.len();
    let mut slice_mass = vec![0.0; nt];
    for ((_, _, it), v) in values.indexed_iter() {
        slice_mass[it] += v * slice_weight;
    }
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut warnings = Vec::new();
    if min_value < -0.1 * big_m {
        return Err(Error::DensityNegative {
            min_rho: min_value,
            threshold: -0.1 * big_m,
        });
    }
    if min_value < 0.0 {
        warnings.push(format!(
            "density attains negative values (min {min_value:.3e}); reported, not clipped"
        ));
    }
    Ok(DensityField {
        expansion,
        values,
        grid: disc.grid,
        slice_mass,
        min_value,
        warnings,
    })
}

/// Residual norms of the damped continuity equation for a candidate density.
#[derive(Debug, Clone)]
pub struct ContinuityResidual {
    /// L²(Q_T) norm of the pointwise residual (includes modes beyond the
    /// density band generated by the convection term).
    pub strong_l2: f64,
    /// l² norm of the residual tested against every retained density mode.
    pub weak_l2: f64,
    /// max |weak residual entry|.
    pub weak_max: f64,
}

/// Evaluate strong and weak residuals of ∂tρ + ∇·(ρu) − εΔρ + ε(ρ − M).
pub fn continuity_residual(
    rho: &ScalarExpansion,
    u: &VectorExpansion,
    domain: &DomainSpec,
    eps: f64,
    mass: f64,
) -> ContinuityResidual {
    use crate::basis::field::Deriv;
    let disc = DensityDiscretization::new(
        domain,
        (
            rho.fx.harmonics(),
            rho.fz.harmonics(),
            rho.ft.harmonics(),
        ),
        u,
    );
    let big_m = mass / domain.measure();
    let u_vals = (
        disc.grid.scalar_values(&u.component(0)),
        disc.grid.scalar_values(&u.component(1)),
    );

    // strong residual on the work grid, with the convection term unprojected
    let rv = disc.grid.scalar_values(rho);
    let mx = disc.grid.analyze(&(&rv * &u_vals.0));
    let mz = disc.grid.analyze(&(&rv * &u_vals.1));
    let div_full = ScalarExpansion {
        fx: disc.grid.gx.fourier().clone(),
        fz: disc.grid.gz.fourier().clone(),
        ft: disc.grid.gt.fourier().clone(),
        coeff: &mx.differentiate(Deriv::X).coeff + &mz.differentiate(Deriv::Z).coeff,
    };
    let lin = {
        let dt = rho.differentiate(Deriv::T);
        let dxx = rho.differentiate(Deriv::X).differentiate(Deriv::X);
        let dzz = rho.differentiate(Deriv::Z).differentiate(Deriv::Z);
        let mut c = dt.coeff + &(rho.coeff.mapv(|v| eps * v)) - (dxx.coeff + dzz.coeff).mapv(|v| eps * v);
        c[(0, 0, 0)] -= eps * big_m;
        ScalarExpansion {
            fx: rho.fx.clone(),
            fz: rho.fz.clone(),
            ft: rho.ft.clone(),
            coeff: c,
        }
    };
    let strong_vals = disc.grid.scalar_values(&div_full) + disc.grid.scalar_values(&lin);
    let strong_l2 = disc.grid.inner(&strong_vals, &strong_vals).max(0.0).sqrt();

    // weak residual: project onto the retained density modes (scaled by the
    // L² norm of each test mode to make entries basis-normalized)
    let proj = &div_full.resize(&rho.fx, &rho.fz, &rho.ft).coeff + &lin.coeff;
    let mut weak_sq = 0.0;
    let mut weak_max: f64 = 0.0;
    for ((jx, jz, jt), v) in proj.indexed_iter() {
        let g = rho.fx.l2_gram(jx) * rho.fz.l2_gram(jz) * rho.ft.l2_gram(jt);
        let entry = v * g.sqrt();
        weak_sq += entry * entry;
        weak_max = weak_max.max(entry.abs());
    }
    ContinuityResidual {
        strong_l2,
        weak_l2: weak_sq.sqrt(),
        weak_max,
    }
}
