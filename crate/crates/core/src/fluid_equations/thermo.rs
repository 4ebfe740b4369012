use nalgebra::DVector;
use serde::Serialize;

use crate::energy_stress::{to_f64, LagrangianSpec};
use crate::error::{Error, Result};
use crate::geometry::field::{partials, Field, ScalarField, VectorField};
use crate::geometry::metric::MetricField;
use crate::geometry::divergence;
use crate::map_calculus::{sigma_elementary, CauchyGreenDecomposition, SigmaModel};

use super::diagnostics::Coefficient;

/// `n = λ₁λ₂λ₃`, `ρ = F(n²)`, `p = −F(n²) + 2n²F′(n²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermoFragment {
    pub n: f64,
    pub rho: f64,
    pub p: f64,
}

pub fn thermo_from_density(decomp: &CauchyGreenDecomposition, spec: &LagrangianSpec) -> Result<ThermoFragment> {
    let u = sigma_elementary(decomp, 3);
    let n = u.sqrt();
    match spec {
        LagrangianSpec::Sigma3Power { k } => {
            let rho = if *k == num_rational::Ratio::from_integer(0) {
                1.0
            } else {
                u.powf(to_f64(*k))
            };
            // (2k−1) is exact, so dust gives p = 0 identically
            let w = to_f64(k * 2 - 1);
            Ok(ThermoFragment { n, rho, p: w * rho })
        }
        LagrangianSpec::GeneralF(g) => {
            let f = (g.f)(u);
            Ok(ThermoFragment {
                n,
                rho: f,
                p: -f + 2.0 * u * (g.df)(u),
            })
        }
        _ => Err(Error::Unsupported(
            "thermodynamic fragment needs a Lagrangian of σ₃".into(),
        )),
    }
}

/// `div(n U)` for the flow of a sigma model.
pub fn particle_conservation_residual(model: &SigmaModel, x: &[f64]) -> Result<f64> {
    model.g.chart().require(x)?;
    let nu: VectorField = model
        .decomposition_field()
        .map(|d| Ok(&d.u * sigma_elementary(&d, 3).sqrt()));
    divergence(&model.g, &nu, x)
}

/// Number density, specific entropy and temperature fields.
#[derive(Clone)]
pub struct ThermoState {
    pub n: ScalarField,
    pub s: ScalarField,
    pub temperature: ScalarField,
}

/// Largest component of `dρ − ((ρ+p)/n) dn − nT ds` at `x`.
pub fn gibbs_residual(state: &ThermoState, rho: &ScalarField, p: &ScalarField, g: &MetricField, x: &[f64]) -> Result<f64> {
    g.chart().require(x)?;
    let (chart, fd) = (g.chart(), g.fd_policy());
    let drho = DVector::from_vec(partials(rho, chart, x, fd)?);
    let dn = DVector::from_vec(partials(&state.n, chart, x, fd)?);
    let ds = DVector::from_vec(partials(&state.s, chart, x, fd)?);
    let n = state.n.eval(x)?;
    if !(n > 0.0) {
        return Err(Error::Domain(format!("number density must be positive, got {n}")));
    }
    let enthalpy = (rho.eval(x)? + p.eval(x)?) / n;
    let t = state.temperature.eval(x)?;
    Ok((drho - dn * enthalpy - ds * (n * t)).amax())
}

/// Entropy-rate diagnostic `div(n s U − (χ/T) Q)`.
pub fn entropy_production(
    state: &ThermoState,
    chi: &Coefficient,
    u: &VectorField,
    g: &MetricField,
    x: &[f64],
) -> Result<f64> {
    g.chart().require(x)?;
    let (st, c, uc, gm) = (state.clone(), chi.clone(), u.clone(), g.clone());
    let field: VectorField = Field::new(move |y| {
        let uy = uc.eval(y)?;
        let mut v = &uy * (st.n.eval(y)? * st.s.eval(y)?);
        let conduct = match &c {
            Coefficient::Constant(v) => *v,
            Coefficient::Field(f) => f.eval(y)?,
        };
        if conduct != 0.0 {
            let q = super::diagnostics::heat_flow(&uc, &st.temperature, &gm, y)?;
            v -= q * (conduct / st.temperature.eval(y)?);
        }
        Ok(v)
    })
    .with_depth(u.depth() + 1);
    divergence(g, &field, x)
}
