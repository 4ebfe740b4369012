//! Perfect-fluid equations and diagnostics.

pub mod diagnostics;
pub mod eos;
pub mod thermo;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::field::{directional, Field, ScalarField, TensorField, VectorField};
use crate::geometry::frame::{mean_curvature, DistributionField, DistributionSplit, Part};
use crate::geometry::metric::{inner, MetricField};
use crate::geometry::{covariant_derivative, divergence, divergence_02, gradient};
use crate::map_calculus::SigmaModel;

pub use diagnostics::{
    acceleration_norm, bulk_divergence, expansion, heat_flow, integrability_two_form, navier_stokes_residual, rharmonic_fundamental_residual, shear_tensor,
    Coefficient, Integrability, ShearTensor, TransportCoefficients,
};
pub use eos::{EosKind, EquationOfState};
pub use thermo::{
    entropy_production, gibbs_residual, particle_conservation_residual, thermo_from_density, ThermoFragment,
    ThermoState,
};

/// `(U, ρ, p)` as fields over the chart.
#[derive(Clone)]
pub struct FluidState {
    pub u: VectorField,
    pub rho: ScalarField,
    pub p: ScalarField,
}

pub const UNIT_TOL: f64 = 1e-10;

impl FluidState {
    pub fn new(u: VectorField, rho: ScalarField, p: ScalarField) -> Self {
        FluidState { u, rho, p }
    }

    /// Fluid induced by a sigma model with `ρ = n^{2k}`, `p = w ρ`.
    pub fn from_model(model: &SigmaModel, k: f64, w: f64) -> Self {
        let d = model.decomposition_field();
        let rho = d.map(move |d| Ok(crate::map_calculus::sigma_elementary(&d, 3).powf(k)));
        let p = rho.map(move |r| Ok(w * r));
        FluidState::new(d.map(|d| Ok(d.u)), rho, p)
    }

    /// Checks `g(U,U) = −1` at `x`.
    pub fn check_unit(&self, g: &MetricField, x: &[f64]) -> Result<()> {
        let u = self.u.eval(x)?;
        let n = inner(&g.at(x)?, &u, &u);
        if (n + 1.0).abs() > UNIT_TOL {
            return Err(Error::Precondition(format!("g(U,U) = {n} is not −1 at {x:?}")));
        }
        Ok(())
    }

    pub fn depth(&self) -> u8 {
        self.u.depth().max(self.rho.depth()).max(self.p.depth())
    }

    /// `T = p g + (ρ + p) ω ⊗ ω` as a field.
    pub fn stress_field(&self, g: &MetricField) -> TensorField {
        let (u, rho, p, gm) = (self.u.clone(), self.rho.clone(), self.p.clone(), g.clone());
        let depth = self.depth().max(g.components().depth());
        Field::new(move |y| {
            let gy = gm.at(y)?;
            Ok(crate::energy_stress::perfect_fluid_tensor(&gy, &u.eval(y)?, rho.eval(y)?, p.eval(y)?))
        })
        .with_depth(depth)
    }
}

fn split_at(g: &MetricField, u: &DVector<f64>, x: &[f64]) -> Result<DistributionSplit> {
    DistributionSplit::new(&g.at(x)?, std::slice::from_ref(u))
}

/// `(ρ + p) ∇_U U + grad^⊥ p`.
pub fn euler_residual(fluid: &FluidState, g: &MetricField, x: &[f64]) -> Result<DVector<f64>> {
    g.chart().require(x)?;
    let u = fluid.u.eval(x)?;
    let s = fluid.rho.eval(x)? + fluid.p.eval(x)?;
    let split = split_at(g, &u, x)?;
    let grad_p = split.project(&gradient(g, &fluid.p, x)?, Part::Horizontal);
    if s == 0.0 {
        return Ok(grad_p);
    }
    let acc = covariant_derivative(g, &fluid.u, &fluid.u, x)?;
    Ok(split.project(&(acc * s), Part::Horizontal) + grad_p)
}

/// `(ρ + p) div U + U(ρ)`.
pub fn energy_conservation_residual(fluid: &FluidState, g: &MetricField, x: &[f64]) -> Result<f64> {
    g.chart().require(x)?;
    let u = fluid.u.eval(x)?;
    let s = fluid.rho.eval(x)? + fluid.p.eval(x)?;
    let div = divergence(g, &fluid.u, x)?;
    let du = directional(&fluid.rho, g.chart(), x, &u, g.fd_policy())?;
    Ok(s * div + du)
}

/// `div U + U(ln √σ₃)` for the flow of a sigma model.
pub fn diu_residual(model: &SigmaModel, x: &[f64]) -> Result<f64> {
    model.g.chart().require(x)?;
    let u_field = model.u_field();
    let u = u_field.eval(x)?;
    let ln_n = model.sigma_field(3).map(|s| {
        if !(s > 0.0) {
            return Err(Error::Regime(format!("σ₃ = {s:.3e} is not positive")));
        }
        Ok(0.5 * s.ln())
    });
    Ok(divergence(&model.g, &u_field, x)? + directional(&ln_n, model.g.chart(), x, &u, model.g.fd_policy())?)
}

/// Full divergence of the perfect-fluid tensor, as a 1-form.
pub fn perfect_fluid_residual(fluid: &FluidState, g: &MetricField, x: &[f64]) -> Result<DVector<f64>> {
    g.chart().require(x)?;
    divergence_02(g, &fluid.stress_field(g), x)
}

/// Residuals of `μ^H = −grad^V ln (f′)^{1/(m−1)}` and `μ^V = grad^H ln f`.
#[derive(Debug, Clone, Serialize)]
pub struct MeanCurvatureResiduals {
    #[serde(serialize_with = "ser_vec")]
    pub horizontal: DVector<f64>,
    #[serde(serialize_with = "ser_vec")]
    pub vertical: DVector<f64>,
}

fn ser_vec<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(v.as_slice(), s)
}

pub fn mean_curvature_form_residuals(
    fluid: &FluidState,
    eos: &EquationOfState,
    g: &MetricField,
    x: &[f64],
) -> Result<MeanCurvatureResiduals> {
    g.chart().require(x)?;
    let p0 = fluid.p.eval(x)?;
    let s = eos.rho(p0)? + p0;
    if s == 0.0 {
        return Err(Error::EosSingular(format!("ρ + p = 0 at {x:?}")));
    }
    let m = g.dimension() as f64;
    let dist = DistributionField::from_vector(&fluid.u);
    let mu_h = mean_curvature(g, &dist, x, Part::Horizontal)?;
    let mu_v = mean_curvature(g, &dist, x, Part::Vertical)?;
    let eos_a = eos.clone();
    let ln_f = fluid.p.map(move |p| eos_a.ln_index(p));
    let eos_b = eos.clone();
    let ln_df = fluid.p.map(move |p| Ok(eos_b.index_derivative(p)?.ln()));
    let u = fluid.u.eval(x)?;
    let split = split_at(g, &u, x)?;
    let grad_v = split.project(&gradient(g, &ln_df, x)?, Part::Vertical);
    let grad_h = split.project(&gradient(g, &ln_f, x)?, Part::Horizontal);
    Ok(MeanCurvatureResiduals {
        horizontal: mu_h + grad_v / (m - 1.0),
        vertical: mu_v - grad_h,
    })
}

/// `μ^H + μ^V − grad ln f`.
pub fn combined_mean_curvature_residual(fluid: &FluidState, eos: &EquationOfState, g: &MetricField, x: &[f64]) -> Result<DVector<f64>> {
    let dist = DistributionField::from_vector(&fluid.u);
    let mu_h = mean_curvature(g, &dist, x, Part::Horizontal)?;
    let mu_v = mean_curvature(g, &dist, x, Part::Vertical)?;
    let eos = eos.clone();
    let ln_f = fluid.p.map(move |p| eos.ln_index(p));
    Ok(mu_h + mu_v - gradient(g, &ln_f, x)?)
}

/// `(P_H, P_V)` matrices for the flow at `x`.
pub fn projectors(g: &MetricField, u: &DVector<f64>, x: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let s = split_at(g, u, x)?;
    Ok((s.horizontal_projector(), s.vertical_projector()))
}
