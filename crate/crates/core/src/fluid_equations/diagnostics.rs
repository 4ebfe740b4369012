use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::field::{Field, ScalarField, TensorField, VectorField};
use crate::geometry::frame::{adapted_form_norm, frame_norm_02, DistributionSplit, Part};
use crate::geometry::metric::MetricField;
use crate::geometry::{
    covariant_derivative, divergence, divergence_02, exterior_derivative, gradient, lie_derivative_02,
    mean_curvature_closed_form,
};
use crate::map_calculus::{horizontal_conformality_check, SigmaModel, DEFAULT_CONFORMALITY_TOL};

use super::{EquationOfState, FluidState};

/// Trace-free shear of the flow restricted to `H × H`.
#[derive(Debug, Clone)]
pub struct ShearTensor {
    pub components: DMatrix<f64>,
    /// Frobenius norm in a g-orthonormal horizontal frame.
    pub norm: f64,
}

fn horizontal_metric_field(u: &VectorField, g: &MetricField) -> TensorField {
    let (u, gm) = (u.clone(), g.clone());
    let depth = u.depth().max(g.components().depth());
    Field::new(move |y| {
        let gy = gm.at(y)?;
        let w = &gy * u.eval(y)?;
        Ok(gy + &w * w.transpose())
    })
    .with_depth(depth)
}

fn shear_unchecked(u: &VectorField, g: &MetricField, x: &[f64]) -> Result<ShearTensor> {
    let m = g.dimension() as f64;
    let ux = u.eval(x)?;
    let gx = g.at(x)?;
    let split = DistributionSplit::new(&gx, std::slice::from_ref(&ux))?;
    let gh = horizontal_metric_field(u, g);
    let lie = lie_derivative_02(g, u, &gh, x)?;
    let div = crate::geometry::covariant_jacobian(g, u, x)?.trace();
    let ph = split.horizontal_projector();
    let raw = lie - gh.eval(x)? * (2.0 * div / (m - 1.0));
    let components = ph.transpose() * raw * &ph;
    let components = (&components + components.transpose()) * 0.5;
    let norm = frame_norm_02(split.horizontal(), &components);
    Ok(ShearTensor { components, norm })
}

/// `L_U g^H − (2/(m−1)) div U · g^H` on `H × H`.
pub fn shear_tensor(u: &VectorField, g: &MetricField, x: &[f64]) -> Result<ShearTensor> {
    g.chart().require(x)?;
    shear_unchecked(u, g, x)
}

fn heat_flow_unchecked(u: &VectorField, temperature: &ScalarField, g: &MetricField, x: &[f64]) -> Result<DVector<f64>> {
    let ux = u.eval(x)?;
    let t = temperature.eval(x)?;
    let split = DistributionSplit::new(&g.at(x)?, std::slice::from_ref(&ux))?;
    let grad_t = {
        let df = DVector::from_vec(crate::geometry::partials(temperature, g.chart(), x, g.fd_policy())?);
        g.inverse_at(x)? * df
    };
    let gamma = crate::geometry::christoffel_unchecked(g, x)?;
    let du = crate::geometry::field::vector_jacobian(u, g.chart(), x, g.fd_policy())?;
    let acc = &du * &ux + gamma.contract(&ux, &ux);
    Ok(split.project(&grad_t, Part::Horizontal) + acc * t)
}

/// `Q = grad^H T + T ∇_U U`.
pub fn heat_flow(u: &VectorField, temperature: &ScalarField, g: &MetricField, x: &[f64]) -> Result<DVector<f64>> {
    g.chart().require(x)?;
    let t = temperature.eval(x)?;
    if !(t > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {t}")));
    }
    heat_flow_unchecked(u, temperature, g, x)
}

/// A transport coefficient: a constant or a field.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Field(ScalarField),
}

impl Coefficient {
    fn is_zero(&self) -> bool {
        matches!(self, Coefficient::Constant(c) if *c == 0.0)
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Coefficient::Constant(c) => Ok(*c),
            Coefficient::Field(f) => f.eval(x),
        }
    }

    fn depth(&self) -> u8 {
        match self {
            Coefficient::Constant(_) => 0,
            Coefficient::Field(f) => f.depth(),
        }
    }
}

/// Shear viscosity `η`, heat conduction `χ`, bulk viscosity `ζ`.
#[derive(Clone)]
pub struct TransportCoefficients {
    pub eta: Coefficient,
    pub chi: Coefficient,
    pub zeta: Coefficient,
}

impl TransportCoefficients {
    pub fn zero() -> Self {
        TransportCoefficients {
            eta: Coefficient::Constant(0.0),
            chi: Coefficient::Constant(0.0),
            zeta: Coefficient::Constant(0.0),
        }
    }

    pub fn constant(eta: f64, chi: f64, zeta: f64) -> Self {
        TransportCoefficients {
            eta: Coefficient::Constant(eta),
            chi: Coefficient::Constant(chi),
            zeta: Coefficient::Constant(zeta),
        }
    }
}

/// Navier-Stokes stress
/// `T − η σ − χ (θ⊗ω + ω⊗θ) − ζ div U · g^H` as a field.
pub fn navier_stokes_tensor_field(
    fluid: &FluidState,
    coeffs: &TransportCoefficients,
    temperature: &ScalarField,
    g: &MetricField,
) -> TensorField {
    let perfect = fluid.stress_field(g);
    if coeffs.eta.is_zero() && coeffs.chi.is_zero() && coeffs.zeta.is_zero() {
        return perfect;
    }
    let depth = perfect
        .depth()
        .max(fluid.u.depth() + 1)
        .max(temperature.depth() + 1)
        .max(coeffs.eta.depth())
        .max(coeffs.chi.depth())
        .max(coeffs.zeta.depth());
    let (u, gm, temp, c) = (fluid.u.clone(), g.clone(), temperature.clone(), coeffs.clone());
    Field::new(move |y| {
        let mut t = perfect.eval(y)?;
        let gy = gm.at(y)?;
        let uy = u.eval(y)?;
        let w = &gy * &uy;
        if !c.eta.is_zero() {
            t -= shear_unchecked(&u, &gm, y)?.components * c.eta.eval(y)?;
        }
        if !c.chi.is_zero() {
            let theta = &gy * heat_flow_unchecked(&u, &temp, &gm, y)?;
            t -= (&theta * w.transpose() + &w * theta.transpose()) * c.chi.eval(y)?;
        }
        if !c.zeta.is_zero() {
            let div = crate::geometry::covariant_jacobian(&gm, &u, y)?.trace();
            t -= (&gy + &w * w.transpose()) * (c.zeta.eval(y)? * div);
        }
        Ok(t)
    })
    .with_depth(depth)
}

/// `div T_NS` as a 1-form.
pub fn navier_stokes_residual(
    fluid: &FluidState,
    coeffs: &TransportCoefficients,
    temperature: &ScalarField,
    g: &MetricField,
    x: &[f64],
) -> Result<DVector<f64>> {
    g.chart().require(x)?;
    divergence_02(g, &navier_stokes_tensor_field(fluid, coeffs, temperature, g), x)
}

/// `div(div U · g^H)` as a 1-form.
pub fn bulk_divergence(u: &VectorField, g: &MetricField, x: &[f64]) -> Result<DVector<f64>> {
    g.chart().require(x)?;
    let (uc, gm) = (u.clone(), g.clone());
    let gh = horizontal_metric_field(u, g);
    let field: TensorField = Field::new(move |y| {
        let div = crate::geometry::covariant_jacobian(&gm, &uc, y)?.trace();
        Ok(gh.eval(y)? * div)
    })
    .with_depth(u.depth() + 1);
    divergence_02(g, &field, x)
}

/// Exterior derivative of `ϑ = (U/f)^♭` with the hypersurface-orthogonality flag.
#[derive(Debug, Clone, Serialize)]
pub struct Integrability {
    #[serde(skip)]
    pub two_form: DMatrix<f64>,
    /// `‖dϑ|_{H×H}‖` in an orthonormal frame.
    pub horizontal_norm: f64,
    /// `horizontal_norm / ‖ϑ‖`.
    pub relative: f64,
    pub integrable: bool,
}

pub const INTEGRABILITY_TOL: f64 = 1e-6;

pub fn integrability_two_form(fluid: &FluidState, eos: &EquationOfState, g: &MetricField, x: &[f64]) -> Result<Integrability> {
    g.chart().require(x)?;
    let (u, p, gm, e) = (fluid.u.clone(), fluid.p.clone(), g.clone(), eos.clone());
    let theta: VectorField = Field::new(move |y| {
        let f = e.index(p.eval(y)?)?;
        Ok(gm.at(y)? * u.eval(y)? / f)
    })
    .with_depth(fluid.depth().max(g.components().depth()));
    let d = exterior_derivative(g, &theta, x)?;
    let gx = g.at(x)?;
    let ux = fluid.u.eval(x)?;
    let split = DistributionSplit::new(&gx, std::slice::from_ref(&ux))?;
    let horizontal_norm = frame_norm_02(split.horizontal(), &d);
    let size = adapted_form_norm(&gx, &g.inverse_at(x)?, &ux, &theta.eval(x)?);
    let relative = horizontal_norm / size;
    Ok(Integrability {
        two_form: d,
        horizontal_norm,
        relative,
        integrable: relative < INTEGRABILITY_TOL,
    })
}

/// `(n − r) grad^H ln λ + (m − n) μ^V` for a horizontally conformal map.
pub fn rharmonic_fundamental_residual(model: &SigmaModel, r: f64, x: &[f64]) -> Result<DVector<f64>> {
    let d = model.decompose(x)?;
    let c = horizontal_conformality_check(&d, DEFAULT_CONFORMALITY_TOL);
    if !c.conformal {
        return Err(Error::Precondition(format!(
            "map is not horizontally conformal at {x:?} (gap {:.3e})",
            c.max_relative_gap
        )));
    }
    let m = model.g.dimension() as f64;
    let n = model.h.dimension() as f64;
    let ln_lambda = model.sigma_field(3).map(move |s| Ok(s.ln() / (2.0 * n)));
    let split = DistributionSplit::new(&d.metric, std::slice::from_ref(&d.u))?;
    let grad = split.project(&gradient(&model.g, &ln_lambda, x)?, Part::Horizontal);
    let mu_v = mean_curvature_closed_form(&model.g, &model.u_field(), x, Part::Vertical)?;
    Ok(grad * (n - r) + mu_v * (m - n))
}

/// `‖∇_U U‖` in the adapted norm.
pub fn acceleration_norm(u: &VectorField, g: &MetricField, x: &[f64]) -> Result<f64> {
    let a = covariant_derivative(g, u, u, x)?;
    Ok(crate::geometry::adapted_norm(&g.at(x)?, &u.eval(x)?, &a))
}

/// `div U`.
pub fn expansion(u: &VectorField, g: &MetricField, x: &[f64]) -> Result<f64> {
    divergence(g, u, x)
}
