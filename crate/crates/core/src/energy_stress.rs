//! Lagrangian densities, their stress-energy tensors and the perfect fluids
//! they describe.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::catalog::SolutionCase;
use crate::error::{Error, Result};
use crate::fluid_equations::{energy_conservation_residual, euler_residual, FluidState};
use crate::geometry::field::{Field, ScalarField, TensorField, VectorField};
use crate::geometry::frame::{adapted_form_norm, adapted_norm, DistributionSplit};
use crate::geometry::metric::{inner, MetricField, Signature};
use crate::geometry::{divergence_02, mean_curvature_closed_form, Part};
use crate::map_calculus::{
    decompose_parts, newton_tensor, sigma_elementary, CauchyGreenDecomposition, SigmaModel, SmoothMap,
};

pub type Rational = Ratio<i64>;

/// Parse `"p/q"`, an integer or a finite decimal such as `0.25`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::InvalidCase(format!("`{s}` is not a rational p/q"));
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || frac.len() > 15 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int.trim_start().starts_with('-');
        let whole: i64 = match int.trim() {
            "" | "-" | "+" => 0,
            t => t.parse().map_err(|_| bad())?,
        };
        let scale = 10i64.pow(frac.len() as u32);
        let f: i64 = frac.parse().map_err(|_| bad())?;
        let mag = whole.abs().checked_mul(scale).and_then(|v| v.checked_add(f)).ok_or_else(bad)?;
        return Ok(Rational::new(if negative { -mag } else { mag }, scale));
    }
    match s.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0 {
                return Err(bad());
            }
            Ok(Rational::new(p, q))
        }
        None => Ok(Rational::from_integer(s.parse().map_err(|_| bad())?)),
    }
}

pub fn to_f64(r: Rational) -> f64 {
    r.to_f64().expect("finite rational")
}

/// `F` and `F′` for the generalized Lagrangian `F(σ₃)`.
#[derive(Clone)]
pub struct Generator {
    pub label: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Generator {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Generator {
            label: label.into(),
            f: Arc::new(f),
            df: Arc::new(df),
        }
    }

    /// `F(u) = u^k`.
    pub fn power(k: Rational) -> Self {
        let kf = to_f64(k);
        Generator::new(
            format!("u^{k}"),
            move |u| if kf == 0.0 { 1.0 } else { u.powf(kf) },
            move |u| if kf == 0.0 { 0.0 } else { kf * u.powf(kf - 1.0) },
        )
    }
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Generator({})", self.label)
    }
}

#[derive(Debug, Clone)]
pub enum LagrangianSpec {
    /// `e_k = σ₁^{k/2} / k`.
    KEnergy { k: Rational },
    /// `σ_k`, `k ∈ {1, 2, 3}`.
    SigmaK { k: usize },
    /// `σ₃^k`.
    Sigma3Power { k: Rational },
    /// `F(σ₃)`.
    GeneralF(Generator),
}

impl LagrangianSpec {
    pub fn sigma3_power(k: Rational) -> Result<Self> {
        if k < Rational::zero() {
            return Err(Error::Domain(format!("exponent k = {k} must be non-negative")));
        }
        Ok(LagrangianSpec::Sigma3Power { k })
    }

    /// Exact `p/ρ` of the induced fluid, when linear.
    pub fn eos_ratio(&self) -> Option<Rational> {
        match self {
            LagrangianSpec::Sigma3Power { k } => Some(k * 2 - 1),
            _ => None,
        }
    }

    pub fn generator(&self) -> Option<Generator> {
        match self {
            LagrangianSpec::Sigma3Power { k } => Some(Generator::power(*k)),
            LagrangianSpec::GeneralF(g) => Some(g.clone()),
            _ => None,
        }
    }

    pub fn provenance(&self) -> Provenance {
        match self {
            LagrangianSpec::KEnergy { k } => Provenance {
                family: "k_energy".into(),
                exponent: k.to_string(),
                density_factor: 1.0,
            },
            LagrangianSpec::SigmaK { k } => Provenance {
                family: "sigma_k".into(),
                exponent: k.to_string(),
                density_factor: 0.5,
            },
            LagrangianSpec::Sigma3Power { k } => Provenance {
                family: "sigma3_power".into(),
                exponent: k.to_string(),
                density_factor: 1.0,
            },
            LagrangianSpec::GeneralF(g) => Provenance {
                family: "general_f".into(),
                exponent: g.label.clone(),
                density_factor: 1.0,
            },
        }
    }
}

/// Which Lagrangian produced a stress, and the density normalization used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub family: String,
    pub exponent: String,
    /// Factor multiplying `σ_k` in the energy whose stress is reported.
    pub density_factor: f64,
}

#[derive(Debug, Clone)]
pub struct StressTensor {
    pub components: DMatrix<f64>,
    pub provenance: Provenance,
}

fn sigma1_power(decomp: &CauchyGreenDecomposition, exponent: f64, k: Rational) -> Result<f64> {
    let s1 = sigma_elementary(decomp, 1);
    if s1 < 0.0 && !k.is_integer() {
        return Err(Error::Regime(format!("σ₁ = {s1:.3e} < 0 with fractional k = {k}")));
    }
    if exponent == 0.0 {
        return Ok(1.0);
    }
    Ok(s1.powf(exponent))
}

pub fn lagrangian_density(spec: &LagrangianSpec, decomp: &CauchyGreenDecomposition) -> Result<f64> {
    match spec {
        LagrangianSpec::KEnergy { k } => {
            if k.is_zero() {
                return Err(Error::Domain("k-energy needs k > 0".into()));
            }
            Ok(sigma1_power(decomp, to_f64(*k) / 2.0, *k)? / to_f64(*k))
        }
        LagrangianSpec::SigmaK { k } => Ok(sigma_elementary(decomp, *k)),
        LagrangianSpec::Sigma3Power { k } => Ok(power(sigma_elementary(decomp, 3), *k)),
        LagrangianSpec::GeneralF(g) => Ok((g.f)(sigma_elementary(decomp, 3))),
    }
}

fn power(base: f64, k: Rational) -> f64 {
    if k.is_zero() {
        1.0
    } else if k.is_integer() {
        base.powi(k.to_integer() as i32)
    } else {
        base.powf(to_f64(k))
    }
}

/// `(φ*h ∘ χ)_{ab} = (φ*h)(χ ∂_a, ∂_b)`, symmetrized.
fn pullback_compose(p: &DMatrix<f64>, chi: &DMatrix<f64>) -> DMatrix<f64> {
    let t = chi.transpose() * p;
    (&t + t.transpose()) * 0.5
}

/// Stress-energy tensor at a decomposed point.
pub fn stress_tensor(spec: &LagrangianSpec, decomp: &CauchyGreenDecomposition) -> Result<StressTensor> {
    let g = &decomp.metric;
    let p = &decomp.pullback;
    let components = match spec {
        LagrangianSpec::KEnergy { k } => {
            let e = lagrangian_density(spec, decomp)?;
            let w = sigma1_power(decomp, (to_f64(*k) - 2.0) / 2.0, *k)?;
            g * e - p * w
        }
        LagrangianSpec::SigmaK { k } => {
            if !(1..=3).contains(k) {
                return Err(Error::Domain(format!("σ_k stress needs k ∈ 1..=3, got {k}")));
            }
            let chi = newton_tensor(decomp, k - 1);
            g * (0.5 * sigma_elementary(decomp, *k)) - pullback_compose(p, &chi)
        }
        LagrangianSpec::Sigma3Power { k } => {
            let n2k = power(sigma_elementary(decomp, 3), *k);
            let w = to_f64(*k * 2 - 1);
            decomp.horizontal_metric() * (-w / 2.0 * n2k) - decomp.vertical_metric() * (0.5 * n2k)
        }
        LagrangianSpec::GeneralF(gen) => {
            let s3 = sigma_elementary(decomp, 3);
            let chi = newton_tensor(decomp, 2);
            g * (0.5 * (gen.f)(s3)) - pullback_compose(p, &chi) * (gen.df)(s3)
        }
    };
    Ok(StressTensor {
        components,
        provenance: spec.provenance(),
    })
}

/// The `σ₃^k` stress through Newton tensors, `½σ₃^k g − k σ₃^{k−1} φ*h∘χ₂`.
pub fn sigma3_power_stress_newton(k: Rational, decomp: &CauchyGreenDecomposition) -> DMatrix<f64> {
    let s3 = sigma_elementary(decomp, 3);
    let chi = newton_tensor(decomp, 2);
    let kf = to_f64(k);
    let coef = if k.is_zero() { 0.0 } else { kf * power(s3, k - 1) };
    &decomp.metric * (0.5 * power(s3, k)) - pullback_compose(&decomp.pullback, &chi) * coef
}

/// Stress tensor as a field over the domain chart.
pub fn stress_field(spec: &LagrangianSpec, model: &SigmaModel) -> TensorField {
    let spec = spec.clone();
    model
        .decomposition_field()
        .map(move |d| Ok(stress_tensor(&spec, &d)?.components))
}

/// `div S` as a 1-form at `x`.
pub fn stress_divergence(spec: &LagrangianSpec, model: &SigmaModel, x: &[f64]) -> Result<DVector<f64>> {
    model.g.chart().require(x)?;
    divergence_02(&model.g, &stress_field(spec, model), x)
}

/// Split of `div S` into its `U` component and horizontal part.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceSplit {
    /// `(div S)(U)`.
    pub vertical: f64,
    /// Norm of the horizontal part in an orthonormal frame.
    pub horizontal_norm: f64,
}

pub fn split_divergence(model: &SigmaModel, form: &DVector<f64>, x: &[f64]) -> Result<DivergenceSplit> {
    let d = model.decompose(x)?;
    let vertical = form.dot(&d.u);
    let g_inv = model.g.inverse_at(x)?;
    let total = adapted_form_norm(&d.metric, &g_inv, &d.u, form);
    Ok(DivergenceSplit {
        vertical,
        horizontal_norm: (total * total - vertical * vertical).max(0.0).sqrt(),
    })
}

/// `(ρ, p)` read off a fluid-type tensor, with the perfect-fluid test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluidExtraction {
    pub rho: f64,
    pub p: f64,
    pub is_perfect: bool,
    pub defect: f64,
}

pub const PERFECT_TOL: f64 = 1e-8;

/// `ρ = T(U,U)`, `p = ⅓ tr_H T`; perfect iff off-block and anisotropic parts
/// are below `1e-8` relative to the scale of `(ρ, p)`.
pub fn perfect_fluid_extract(t: &DMatrix<f64>, g: &DMatrix<f64>, u: &DVector<f64>) -> Result<FluidExtraction> {
    let split = DistributionSplit::new(g, std::slice::from_ref(u))?;
    let e = split.horizontal().matrix();
    let rho = inner(t, u, u);
    let th = e.transpose() * t * &e;
    let n = th.nrows();
    let p = th.trace() / n as f64;
    let mixed = (e.transpose() * t * u).amax();
    let aniso = (th - DMatrix::identity(n, n) * p).amax();
    let scale = rho.abs().max(p.abs()).max(1e-300);
    let defect = mixed.max(aniso) / scale;
    Ok(FluidExtraction {
        rho,
        p,
        is_perfect: defect < PERFECT_TOL,
        defect,
    })
}

/// `T = p g + (ρ + p) ω ⊗ ω`.
pub fn perfect_fluid_tensor(g: &DMatrix<f64>, u: &DVector<f64>, rho: f64, p: f64) -> DMatrix<f64> {
    let w = g * u;
    g * p + (&w * w.transpose()) * (rho + p)
}

/// Fluid tensor `T = −2S` of a stress.
pub fn fluid_tensor(stress: &StressTensor) -> DMatrix<f64> {
    &stress.components * -2.0
}

fn check_positive(field: &ScalarField, x: &[f64], what: &str) -> Result<f64> {
    let v = field.eval(x)?;
    if !(v > 0.0) {
        return Err(Error::Domain(format!("{what} must be positive, got {v} at {x:?}")));
    }
    Ok(v)
}

/// Residual of the stiff-fluid equations for `(ς³U, ς⁶ρ, ς⁶p)` on
/// `ḡ = ς⁻² g^H − ς⁻⁶ g^V`: `sqrt(|Euler|² + energy²)`.
pub fn biconformal_invariance_check(case: &SolutionCase, varsigma: &ScalarField, x: &[f64]) -> Result<f64> {
    if case.k != Rational::from_integer(1) {
        return Err(Error::Precondition(format!(
            "biconformal invariance holds for σ₃-critical maps (k = 1), case has k = {}",
            case.k
        )));
    }
    biconformal_residual(&case.model, varsigma, x)
}

/// As [`biconformal_invariance_check`], for any sigma-model configuration.
pub fn biconformal_residual(model: &SigmaModel, varsigma: &ScalarField, x: &[f64]) -> Result<f64> {
    model.g.chart().require(x)?;
    check_positive(varsigma, x, "ς")?;
    let decomps = model.decomposition_field();
    let vs = varsigma.clone();
    let depth = model.depth().max(varsigma.depth());
    let bar_components: TensorField = {
        let decomps = decomps.clone();
        let vs = vs.clone();
        Field::new(move |y| {
            let d = decomps.eval(y)?;
            let s = vs.eval(y)?;
            if !(s > 0.0) {
                return Err(Error::Domain(format!("ς must be positive, got {s} at {y:?}")));
            }
            Ok(d.horizontal_metric() * s.powi(-2) - d.vertical_metric() * s.powi(-6))
        })
        .with_depth(depth)
    };
    let g_bar = MetricField::new(model.g.chart().clone(), bar_components, Signature::lorentzian(model.g.dimension()))?
        .with_fd_policy(*model.g.fd_policy());
    let u_bar: VectorField = {
        let decomps = decomps.clone();
        let vs = vs.clone();
        Field::new(move |y| Ok(decomps.eval(y)?.u * vs.eval(y)?.powi(3))).with_depth(depth)
    };
    let rho_bar: ScalarField = {
        let decomps = decomps.clone();
        Field::new(move |y| Ok(sigma_elementary(&decomps.eval(y)?, 3) * vs.eval(y)?.powi(6))).with_depth(depth)
    };
    let fluid = FluidState::new(u_bar, rho_bar.clone(), rho_bar);
    let euler = euler_residual(&fluid, &g_bar, x)?;
    let energy = energy_conservation_residual(&fluid, &g_bar, x)?;
    let gx = g_bar.at(x)?;
    let ux = fluid.u.eval(x)?;
    let e = adapted_norm(&gx, &ux, &euler);
    Ok((e * e + energy * energy).sqrt())
}

/// Outcome of rescaling the target metric by `ν̄²`.
#[derive(Debug, Clone, Serialize)]
pub struct CodomainRescale {
    /// Max over `i` of `|λ̃ᵢ / (ν λᵢ) − 1|`.
    pub eigenvalue_ratio_defect: f64,
    /// `ν = ν̄ ∘ φ` at the point.
    pub nu: f64,
    /// Norm of `−3 grad^H ln ν − grad^H ln λ₁λ₂λ₃ + μ^V`.
    pub residual: f64,
}

/// Modified criticality residual after `h ↦ ν̄² h`.
pub fn codomain_conformal_rescale(
    map: &SmoothMap,
    g: &MetricField,
    h: &MetricField,
    nu_bar: &ScalarField,
    x: &[f64],
) -> Result<CodomainRescale> {
    g.chart().require(x)?;
    let model = SigmaModel::new(map.clone(), g.clone(), h.clone())?;
    let y = map.value_at(x)?;
    let nu = check_positive(nu_bar, y.as_slice(), "ν̄")?;
    let d = model.decompose(x)?;

    let h_tilde = h.at(y.as_slice())? * (nu * nu);
    let dt = decompose_parts(&d.jacobian, &d.metric, &h_tilde, g.chart().time_index().unwrap_or(0))?;
    let defect = d
        .eigenvalues
        .iter()
        .zip(&dt.eigenvalues)
        .map(|(l, lt)| ((lt / l).sqrt() / nu - 1.0).abs())
        .fold(0.0, f64::max);

    let map_c = map.clone();
    let nb = nu_bar.clone();
    let ln_nu: ScalarField = Field::new(move |z| {
        let v = nb.eval(map_c.value_at(z)?.as_slice())?;
        if !(v > 0.0) {
            return Err(Error::Domain(format!("ν̄ must be positive, got {v}")));
        }
        Ok(v.ln())
    })
    .with_depth(nu_bar.depth());
    let ln_n = model.sigma_field(3).map(|s| Ok(0.5 * s.ln()));
    let split = DistributionSplit::new(&d.metric, std::slice::from_ref(&d.u))?;
    let grad_nu = crate::geometry::projected_gradient(g, &split, &ln_nu, x, Part::Horizontal)?;
    let grad_n = crate::geometry::projected_gradient(g, &split, &ln_n, x, Part::Horizontal)?;
    let mu_v = mean_curvature_closed_form(g, &model.u_field(), x, Part::Vertical)?;
    let r = mu_v - grad_n - grad_nu * 3.0;
    Ok(CodomainRescale {
        eigenvalue_ratio_defect: defect,
        nu,
        residual: adapted_norm(&d.metric, &d.u, &r),
    })
}
