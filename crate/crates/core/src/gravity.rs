//! Curvature of Lorentzian metrics and the Einstein coupling of sigma-model
//! stresses.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::energy_stress::StressTensor;
use crate::error::{Error, Result};
use crate::geometry::connection::{christoffel_field, christoffel_unchecked};
use crate::geometry::field::{partials, Field, TensorField};
use crate::geometry::frame::DistributionSplit;
use crate::geometry::metric::MetricField;
use crate::geometry::divergence_02;

/// Riemann `R^a_{bcd}`, Ricci `R_{bd} = R^a_{bad}` and scalar curvature.
#[derive(Debug, Clone)]
pub struct CurvatureBundle {
    dim: usize,
    riemann: Vec<f64>,
    pub ricci: DMatrix<f64>,
    pub scalar: f64,
}

impl CurvatureBundle {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn riemann(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let m = self.dim;
        self.riemann[((a * m + b) * m + c) * m + d]
    }

    /// `R_{abcd} = g_{ae} R^e_{bcd}`.
    pub fn lowered(&self, g: &DMatrix<f64>, a: usize, b: usize, c: usize, d: usize) -> f64 {
        (0..self.dim).map(|e| g[(a, e)] * self.riemann(e, b, c, d)).sum()
    }

    /// Largest violation of `R_{abcd} = −R_{bacd} = R_{cdab}`, the first
    /// Bianchi identity, and the symmetry of Ricci.
    pub fn symmetry_residual(&self, g: &DMatrix<f64>) -> f64 {
        let m = self.dim;
        let mut worst = (&self.ricci - self.ricci.transpose()).amax();
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        let r = self.lowered(g, a, b, c, d);
                        worst = worst
                            .max((r + self.lowered(g, b, a, c, d)).abs())
                            .max((r - self.lowered(g, c, d, a, b)).abs())
                            .max((r + self.lowered(g, a, b, d, c)).abs())
                            .max((self.riemann(a, b, c, d) + self.riemann(a, c, d, b) + self.riemann(a, d, b, c)).abs());
                    }
                }
            }
        }
        worst
    }

    /// `G = Ric − ½ Scal g`.
    pub fn einstein(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        &self.ricci - g * (0.5 * self.scalar)
    }
}

/// Curvature at `x` by differencing the Christoffel symbols, which are
/// analytic whenever the metric carries analytic partials.
pub fn curvature(metric: &MetricField, x: &[f64]) -> Result<CurvatureBundle> {
    metric.chart().require(x)?;
    curvature_unchecked(metric, x)
}

fn curvature_unchecked(metric: &MetricField, x: &[f64]) -> Result<CurvatureBundle> {
    let m = metric.dimension();
    let gamma = christoffel_unchecked(metric, x)?;
    let dgamma = partials(&christoffel_field(metric), metric.chart(), x, metric.fd_policy())?;
    let idx = |a: usize, b: usize, c: usize| (a * m + b) * m + c;
    let mut riemann = vec![0.0; m * m * m * m];
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    let mut r = dgamma[c][idx(a, d, b)] - dgamma[d][idx(a, c, b)];
                    for e in 0..m {
                        r += gamma.get(a, c, e) * gamma.get(e, d, b) - gamma.get(a, d, e) * gamma.get(e, c, b);
                    }
                    riemann[((a * m + b) * m + c) * m + d] = r;
                }
            }
        }
    }
    let ricci = DMatrix::from_fn(m, m, |b, d| (0..m).map(|a| riemann[((a * m + b) * m + a) * m + d]).sum());
    let ricci = (&ricci + ricci.transpose()) * 0.5;
    let g_inv = metric.inverse_at(x)?;
    let scalar = g_inv.component_mul(&ricci).sum();
    Ok(CurvatureBundle {
        dim: m,
        riemann,
        ricci,
        scalar,
    })
}

/// Einstein tensor as a field, for divergence checks.
pub fn einstein_field(metric: &MetricField) -> TensorField {
    let gm = metric.clone();
    Field::new(move |y| {
        let c = curvature_unchecked(&gm, y)?;
        Ok(c.einstein(&gm.at(y)?))
    })
    .with_depth(metric.connection_depth() + 1)
}

/// `div G` as a 1-form; zero by the contracted Bianchi identity.
pub fn bianchi_residual(metric: &MetricField, x: &[f64]) -> Result<DVector<f64>> {
    metric.chart().require(x)?;
    divergence_02(metric, &einstein_field(metric), x)
}

/// Which matter tensor the coupling constant multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `G = α S` with `S` the stress of the field energy.
    Stress,
    /// `G = α T` with `T = −2S` the fluid tensor.
    Fluid,
}

/// Coupling constant of `G = α S`. The same equations read `G = α_T T` with
/// `α_T = −α/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingConstant {
    pub alpha: f64,
}

impl CouplingConstant {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha == 0.0 {
            return Err(Error::Precondition(format!("coupling constant must be finite and nonzero, got {alpha}")));
        }
        Ok(CouplingConstant { alpha })
    }

    /// The constant multiplying the tensor of `convention`.
    pub fn for_convention(&self, convention: Convention) -> f64 {
        match convention {
            Convention::Stress => self.alpha,
            Convention::Fluid => -self.alpha / 2.0,
        }
    }

    /// `α_T`, the coupling to the fluid tensor.
    pub fn fluid(&self) -> f64 {
        self.for_convention(Convention::Fluid)
    }
}

/// Largest component of `G − α S`.
pub fn einstein_residual(metric: &MetricField, stress: &StressTensor, alpha: f64, x: &[f64]) -> Result<f64> {
    let c = curvature(metric, x)?;
    let g = metric.at(x)?;
    Ok((c.einstein(&g) - &stress.components * alpha).amax())
}

/// `G − α X` where `X` is `S` or `T = −2S` per `convention`, reading `α`
/// literally in both cases.
pub fn einstein_residual_as(
    metric: &MetricField,
    stress: &StressTensor,
    alpha: f64,
    convention: Convention,
    x: &[f64],
) -> Result<f64> {
    let factor = match convention {
        Convention::Stress => alpha,
        Convention::Fluid => -2.0 * alpha,
    };
    einstein_residual(metric, stress, factor, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Admissibility {
    /// Horizontal Ricci block proportional to `g^H`.
    pub isotropic: bool,
    /// `Ric(X, U) = 0` for horizontal `X`.
    pub mixed: bool,
    pub isotropy_gap: f64,
    pub mixed_norm: f64,
}

pub const ADMISSIBILITY_TOL: f64 = 1e-6;

fn frame_blocks(metric: &MetricField, c: &CurvatureBundle, u: &DVector<f64>, x: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let g = metric.at(x)?;
    let split = DistributionSplit::new(&g, std::slice::from_ref(u))?;
    let frame = split.horizontal().matrix();
    let ruu = (u.transpose() * &c.ricci * u)[(0, 0)];
    let mixed = frame.transpose() * &c.ricci * u;
    let block = frame.transpose() * &c.ricci * &frame;
    Ok((ruu, mixed, block))
}

pub fn admissibility_check(metric: &MetricField, u: &DVector<f64>, x: &[f64]) -> Result<Admissibility> {
    let c = curvature(metric, x)?;
    admissibility_from(metric, &c, u, x)
}

fn admissibility_from(metric: &MetricField, c: &CurvatureBundle, u: &DVector<f64>, x: &[f64]) -> Result<Admissibility> {
    let (_, mixed, block) = frame_blocks(metric, c, u, x)?;
    let n = block.nrows();
    let mean = block.trace() / n as f64;
    let isotropy_gap = (&block - DMatrix::identity(n, n) * mean).amax();
    let scale = c.ricci.amax().max(1.0);
    let mixed_norm = mixed.amax();
    Ok(Admissibility {
        isotropic: isotropy_gap < ADMISSIBILITY_TOL * scale,
        mixed: mixed_norm < ADMISSIBILITY_TOL * scale,
        isotropy_gap,
        mixed_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureFluid {
    pub rho: f64,
    pub p: f64,
    pub admissibility: Admissibility,
}

/// `ρ = (1/α_T)[Ric(U,U) + ½Scal]`, `p = (1/(3α_T))[Ric(U,U) − ½Scal]`.
pub fn fluid_from_curvature(metric: &MetricField, u: &DVector<f64>, coupling: CouplingConstant, x: &[f64]) -> Result<CurvatureFluid> {
    let c = curvature(metric, x)?;
    let admissibility = admissibility_from(metric, &c, u, x)?;
    if !(admissibility.isotropic && admissibility.mixed) {
        return Err(Error::Precondition(format!(
            "metric is not a perfect-fluid geometry for this U at {x:?} (isotropy gap {:.3e}, mixed {:.3e})",
            admissibility.isotropy_gap, admissibility.mixed_norm
        )));
    }
    let (ruu, _, _) = frame_blocks(metric, &c, u, x)?;
    let alpha = coupling.fluid();
    Ok(CurvatureFluid {
        rho: (ruu + 0.5 * c.scalar) / alpha,
        p: (ruu - 0.5 * c.scalar) / (3.0 * alpha),
        admissibility,
    })
}
