//! Equivariant ansätze: reduction of the criticality equations to profile
//! ODEs, their closed-form solutions, and numerical integration.

use ode_solvers::continuous_output_model::ContinuousOutputModel;
use ode_solvers::{Dopri5, OutputType, Rk4, System, Vector2};
use serde::Serialize;

use crate::catalog::expr::{Expr, Scope};
use crate::catalog::schema::{ChartSpec, ConstraintSpec, Definition, MetricSpec};
use crate::catalog::build_model;
use crate::energy_stress::{to_f64, Rational};
use crate::error::{Error, Result};
use crate::geometry::chart::ChartDomain;
use crate::geometry::field::{partials, FdPolicy, Field, ScalarField, VectorField};
use crate::map_calculus::SigmaModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzFamily {
    /// `α = f(r/x₄)` into flat ℝ³ in spherical coordinates.
    So3Spherical,
    /// `β = f(x₃/x₄)` into the flat cylinder.
    So2Cylindrical,
    /// `α = f(ln((x₄² − r²)/r))` into flat ℝ³.
    MorawetzLog,
    /// `β = f(r/x₄)` into the round 3-sphere, horizontally conformal.
    CorotationalSphere,
}

impl AnsatzFamily {
    pub const ALL: [AnsatzFamily; 4] = [
        AnsatzFamily::So3Spherical,
        AnsatzFamily::So2Cylindrical,
        AnsatzFamily::MorawetzLog,
        AnsatzFamily::CorotationalSphere,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AnsatzFamily::So3Spherical => "so3",
            AnsatzFamily::So2Cylindrical => "so2",
            AnsatzFamily::MorawetzLog => "morawetz",
            AnsatzFamily::CorotationalSphere => "corotational",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Unsupported(format!("unknown ansatz family `{s}` (so3, so2, morawetz, corotational)")))
    }

    /// Profile variable as an expression of the domain coordinates.
    pub fn variable(&self) -> &'static str {
        match self {
            AnsatzFamily::So3Spherical | AnsatzFamily::CorotationalSphere => "r/x4",
            AnsatzFamily::So2Cylindrical => "x3/x4",
            AnsatzFamily::MorawetzLog => "ln((x4^2 - r^2)/r)",
        }
    }

    /// Open interval of the profile variable.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            AnsatzFamily::So3Spherical | AnsatzFamily::CorotationalSphere => (0.0, 1.0),
            AnsatzFamily::So2Cylindrical => (-1.0, 1.0),
            AnsatzFamily::MorawetzLog => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn check(&self, z: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        // the closed forms of the cone families extend continuously to z = 0
        let lo_ok = match self {
            AnsatzFamily::So3Spherical | AnsatzFamily::CorotationalSphere => z >= lo,
            _ => z > lo,
        };
        if !(lo_ok && z < hi) {
            return Err(Error::Domain(format!(
                "{} profile variable {z} outside ({lo}, {hi})",
                self.name()
            )));
        }
        Ok(())
    }
}

/// An ansatz family together with the exponent of the `σ₃^k` energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivariantAnsatz {
    pub family: AnsatzFamily,
    #[serde(serialize_with = "ser_rational")]
    pub k: Rational,
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

fn def(name: &str, expr: &str) -> Definition {
    Definition {
        name: name.into(),
        expr: expr.into(),
    }
}

fn constraint(label: &str, margin: &str) -> ConstraintSpec {
    ConstraintSpec {
        label: label.into(),
        margin: margin.into(),
    }
}

fn diag(entries: &[&str]) -> MetricSpec {
    MetricSpec::Diagonal {
        diagonal: entries.iter().map(|s| s.to_string()).collect(),
    }
}

fn cone_chart() -> ChartSpec {
    ChartSpec {
        coordinates: vec!["x4".into(), "r".into(), "s".into(), "th".into()],
        time: Some("x4".into()),
        definitions: vec![],
        constraints: vec![
            constraint("inside the light cone", "x4 - r"),
            constraint("r > 0", "r"),
            constraint("s > 0", "s"),
            constraint("s < pi", "pi - s"),
        ],
        metric: diag(&["-1", "1", "r^2", "r^2*sin(s)^2"]),
    }
}

fn wedge_chart() -> ChartSpec {
    ChartSpec {
        coordinates: vec!["x4".into(), "x3".into(), "xp".into(), "ph".into()],
        time: Some("x4".into()),
        definitions: vec![],
        constraints: vec![
            constraint("x4 > x3", "x4 - x3"),
            constraint("x4 > -x3", "x4 + x3"),
            constraint("xp > 0", "xp"),
        ],
        metric: diag(&["-1", "1", "1", "xp^2"]),
    }
}

fn flat_spherical_target() -> ChartSpec {
    ChartSpec {
        coordinates: vec!["a".into(), "b".into(), "c".into()],
        time: None,
        definitions: vec![],
        constraints: vec![
            constraint("a > 0", "a"),
            constraint("b > 0", "b"),
            constraint("b < pi", "pi - b"),
        ],
        metric: diag(&["1", "a^2", "a^2*sin(b)^2"]),
    }
}

fn cylinder_target() -> ChartSpec {
    ChartSpec {
        coordinates: vec!["y".into(), "rc".into(), "pc".into()],
        time: None,
        definitions: vec![],
        constraints: vec![constraint("rc > 0", "rc")],
        metric: diag(&["1", "1", "rc^2"]),
    }
}

/// Round 3-sphere, optionally rescaled by `cos⁻² χ` onto the hemisphere.
fn sphere_target(rescaled: bool) -> ChartSpec {
    let (metric, hi) = if rescaled {
        (
            diag(&["cos(chi)^(-2)", "tan(chi)^2", "tan(chi)^2*sin(b)^2"]),
            "pi/2 - chi",
        )
    } else {
        (diag(&["1", "sin(chi)^2", "sin(chi)^2*sin(b)^2"]), "pi - chi")
    };
    ChartSpec {
        coordinates: vec!["chi".into(), "b".into(), "c".into()],
        time: None,
        definitions: vec![],
        constraints: vec![
            constraint("chi > 0", "chi"),
            constraint("chi upper bound", hi),
            constraint("b > 0", "b"),
            constraint("b < pi", "pi - b"),
        ],
        metric,
    }
}

impl EquivariantAnsatz {
    pub fn new(family: AnsatzFamily, k: Rational) -> Self {
        EquivariantAnsatz { family, k }
    }

    pub fn domain_chart(&self) -> ChartSpec {
        match self.family {
            AnsatzFamily::So2Cylindrical => wedge_chart(),
            _ => cone_chart(),
        }
    }

    pub fn target_chart(&self) -> ChartSpec {
        match self.family {
            AnsatzFamily::So3Spherical | AnsatzFamily::MorawetzLog => flat_spherical_target(),
            AnsatzFamily::So2Cylindrical => cylinder_target(),
            AnsatzFamily::CorotationalSphere => sphere_target(false),
        }
    }

    /// Profile variable at a chart point.
    pub fn profile_variable(&self, x: &[f64]) -> Result<f64> {
        let chart = self.domain_chart();
        let e = Scope::new(&chart.coordinates).parse(self.family.variable())?;
        let z = e.eval(x);
        if !z.is_finite() {
            return Err(Error::Domain(format!("profile variable undefined at {x:?}")));
        }
        Ok(z)
    }

    fn map_components(&self, profile: &str) -> Vec<String> {
        let f = format!("({profile})");
        match self.family {
            AnsatzFamily::So2Cylindrical => vec![f, "xp".into(), "ph".into()],
            _ => vec![f, "s".into(), "th".into()],
        }
    }

    /// Sigma model whose map uses `profile`, an expression in `z`.
    pub fn model(&self, profile: &str) -> Result<SigmaModel> {
        self.model_into(profile, &self.target_chart())
    }

    fn model_into(&self, profile: &str, target: &ChartSpec) -> Result<SigmaModel> {
        build_model(
            &self.domain_chart(),
            target,
            &[def("z", self.family.variable())],
            &self.map_components(profile),
            &[],
        )
    }

    /// Co-rotational map composed with the conformal rescale
    /// `h̃ = cos⁻² χ · can` of the target sphere.
    pub fn rescaled_corotational_model(&self, profile: &str) -> Result<SigmaModel> {
        if self.family != AnsatzFamily::CorotationalSphere {
            return Err(Error::Unsupported("the rescaled target exists for the co-rotational family only".into()));
        }
        self.model_into(profile, &sphere_target(true))
    }
}

/// Reduced profile equation of an ansatz family.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileODE {
    pub family: AnsatzFamily,
    /// 2 for `f″ = F(z, f, f′)`, 1 for `f′ = F(z, f)`.
    pub order: u8,
    pub singular_points: Vec<f64>,
    /// Replaces the family right-hand side when set.
    #[serde(skip)]
    pub custom: Option<fn(f64, f64, f64) -> f64>,
}

impl ProfileODE {
    /// A user right-hand side of the given order, tagged with `family` for reporting.
    pub fn custom(family: AnsatzFamily, order: u8, rhs: fn(f64, f64, f64) -> f64, singular_points: Vec<f64>) -> Self {
        ProfileODE {
            family,
            order,
            singular_points,
            custom: Some(rhs),
        }
    }

    /// `f″` (order 2) or `f′` (order 1).
    pub fn derivative(&self, z: f64, f: f64, df: f64) -> f64 {
        if let Some(rhs) = self.custom {
            return rhs(z, f, df);
        }
        match self.family {
            AnsatzFamily::So3Spherical => 2.0 * df * (1.0 + z * z) / (z * (1.0 - z * z)) - 2.0 * df * df / f,
            AnsatzFamily::So2Cylindrical => 2.0 * z * df / (1.0 - z * z),
            AnsatzFamily::MorawetzLog => -3.0 * df - 2.0 * df * df / f,
            AnsatzFamily::CorotationalSphere => f.sin() / (z * (1.0 - z * z).sqrt()),
        }
    }

    /// The reduced equation in its displayed polynomial form.
    pub fn residual(&self, z: f64, f: f64, df: f64, d2f: f64) -> f64 {
        if let Some(rhs) = self.custom {
            return if self.order == 2 { d2f - rhs(z, f, df) } else { df - rhs(z, f, 0.0) };
        }
        match self.family {
            AnsatzFamily::So3Spherical => {
                (d2f * f * f + 2.0 * df * df * f) * z * (1.0 - z * z) - 2.0 * df * f * f * (1.0 + z * z)
            }
            AnsatzFamily::So2Cylindrical => d2f * (1.0 - z * z) - 2.0 * z * df,
            AnsatzFamily::MorawetzLog => d2f / df + 2.0 * df / f + 3.0,
            AnsatzFamily::CorotationalSphere => df * z * (1.0 - z * z).sqrt() - f.sin(),
        }
    }
}

/// Reduce the criticality equations of an ansatz to its profile ODE.
pub fn reduce(ansatz: &EquivariantAnsatz) -> Result<ProfileODE> {
    let half = Rational::new(1, 2);
    match ansatz.family {
        AnsatzFamily::So3Spherical | AnsatzFamily::So2Cylindrical if ansatz.k == half => Err(Error::Unsupported(
            "k = 1/2 (dust): the horizontal equation is empty and every profile is critical".into(),
        )),
        AnsatzFamily::MorawetzLog if ansatz.k != Rational::new(2, 3) => Err(Error::Unsupported(
            "the log ansatz reduces to an ODE only for the conformally invariant exponent k = 2/3".into(),
        )),
        AnsatzFamily::So3Spherical => Ok(ProfileODE {
            family: ansatz.family,
            order: 2,
            singular_points: vec![0.0, 1.0],
            custom: None,
        }),
        AnsatzFamily::So2Cylindrical => Ok(ProfileODE {
            family: ansatz.family,
            order: 2,
            singular_points: vec![-1.0, 1.0],
            custom: None,
        }),
        AnsatzFamily::MorawetzLog => Ok(ProfileODE {
            family: ansatz.family,
            order: 2,
            singular_points: vec![],
            custom: None,
        }),
        AnsatzFamily::CorotationalSphere => Ok(ProfileODE {
            family: ansatz.family,
            order: 1,
            singular_points: vec![0.0, 1.0],
            custom: None,
        }),
    }
}

const SERIES_GUARD: f64 = 0.05;

/// `2z/(1−z²) + ln((1−z)/(1+z))` with its first two derivatives.
fn so3_core(z: f64) -> (f64, f64, f64) {
    let w = 1.0 - z * z;
    let b = if z < SERIES_GUARD {
        (1..=6).map(|j| 4.0 * j as f64 / (2 * j + 1) as f64 * z.powi(2 * j + 1)).sum()
    } else {
        2.0 * z / w + ((1.0 - z) / (1.0 + z)).ln()
    };
    (b, 4.0 * z * z / (w * w), 8.0 * z * (1.0 + z * z) / (w * w * w))
}

/// `(f, f′, f″)` of the closed-form profile.
pub fn closed_form_derivatives(family: AnsatzFamily, z: f64, c: f64) -> Result<(f64, f64, f64)> {
    family.check(z)?;
    Ok(match family {
        AnsatzFamily::So3Spherical => {
            let (b, db, d2b) = so3_core(z);
            if z == 0.0 {
                return Ok((0.0, c * (4.0f64 / 3.0).cbrt(), 0.0));
            }
            let f = c * b.cbrt();
            let df = c / 3.0 * b.powf(-2.0 / 3.0) * db;
            let d2f = c / 3.0 * (-2.0 / 3.0 * b.powf(-5.0 / 3.0) * db * db + b.powf(-2.0 / 3.0) * d2b);
            (f, df, d2f)
        }
        AnsatzFamily::So2Cylindrical => {
            let w = 1.0 - z * z;
            (c * z.atanh(), c / w, 2.0 * c * z / (w * w))
        }
        AnsatzFamily::MorawetzLog => {
            let e = c * (-z).exp();
            (e, -e, e)
        }
        AnsatzFamily::CorotationalSphere => {
            let s = (1.0 - z * z).sqrt();
            let f = 2.0 * (c * z / (1.0 + s)).atan();
            if z == 0.0 {
                return Ok((0.0, c, 0.0));
            }
            let q = z * s;
            let df = f.sin() / q;
            let dq = (1.0 - 2.0 * z * z) / s;
            let d2f = (f.cos() * df * q - f.sin() * dq) / (q * q);
            (f, df, d2f)
        }
    })
}

/// Closed-form profile: `C(2z/(1−z²) + ln((1−z)/(1+z)))^{1/3}`, `C arctanh z`,
/// `C e^{−u}` or `2 arctan(C z/(1 + √(1−z²)))`, which is `arcsin` at `C = 1`.
pub fn closed_form_profile(family: AnsatzFamily, z: f64, c: f64) -> Result<f64> {
    Ok(closed_form_derivatives(family, z, c)?.0)
}

/// Initial data at `z₀`. The SO(3) family is seeded from the three-term
/// series of its closed form, which is exact to `O(z₀⁹)`.
pub fn series_seed(family: AnsatzFamily, z0: f64, c: f64) -> Result<(f64, f64)> {
    match family {
        AnsatzFamily::So3Spherical => {
            family.check(z0)?;
            let b = 4.0 / 3.0 * z0.powi(3) + 8.0 / 5.0 * z0.powi(5) + 12.0 / 7.0 * z0.powi(7);
            let db = 4.0 * z0.powi(2) + 8.0 * z0.powi(4) + 12.0 * z0.powi(6);
            Ok((c * b.cbrt(), c / 3.0 * b.powf(-2.0 / 3.0) * db))
        }
        _ => {
            let (f, df, _) = closed_form_derivatives(family, z0, c)?;
            Ok((f, df))
        }
    }
}

/// Integration constant of the closed form through `(z₀, f₀, f′₀)`, read off
/// the first integral of each equation: `f′f²(1−z²)²/z² = (4/3)C³`,
/// `f′(1−z²) = C`, `−f′eᵘ = C`, and `tan(f/2)(1+√(1−z²))/z = C`.
pub fn calibrate_constant(family: AnsatzFamily, z0: f64, f0: f64, df0: f64) -> Result<f64> {
    family.check(z0)?;
    let c = match family {
        AnsatzFamily::So3Spherical => {
            let w = 1.0 - z0 * z0;
            (0.75 * f0 * f0 * df0 * w * w / (z0 * z0)).cbrt()
        }
        AnsatzFamily::So2Cylindrical => df0 * (1.0 - z0 * z0),
        AnsatzFamily::MorawetzLog => -df0 * z0.exp(),
        AnsatzFamily::CorotationalSphere => (f0 / 2.0).tan() * (1.0 + (1.0 - z0 * z0).sqrt()) / z0,
    };
    if !c.is_finite() {
        return Err(Error::Domain(format!("no {} closed form through z = {z0}", family.name())));
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Adaptive Dormand-Prince 4(5) with continuous output.
    Dopri5,
    /// Fixed-step classical Runge-Kutta, for reproducibility runs.
    Rk4 { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorOptions {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: u32,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            method: Method::Dopri5,
            rtol: 1e-10,
            atol: 1e-10,
            max_steps: 100_000,
        }
    }
}

/// Accepted steps of an integration with dense evaluation in between.
pub struct SampledProfile {
    pub z: Vec<f64>,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    origin: f64,
    direction: f64,
    order: u8,
    ode: ProfileODE,
    dense: Option<ContinuousOutputModel<f64, Vector2<f64>>>,
}

impl SampledProfile {
    pub fn span(&self) -> (f64, f64) {
        (self.z[0], *self.z.last().expect("non-empty"))
    }

    /// `(f, f′)` at `z` inside the span.
    pub fn evaluate(&self, z: f64) -> Option<(f64, f64)> {
        let (a, b) = self.span();
        if !((z - a) * (z - b) <= 0.0) {
            return None;
        }
        let s = (z - self.origin) * self.direction;
        if let Some(model) = &self.dense {
            let y = model.evaluate(s.max(0.0))?;
            let df = if self.order == 2 { y[1] } else { self.ode.derivative(z, y[0], 0.0) };
            return Some((y[0], df));
        }
        // cubic Hermite between fixed steps, in the forward variable
        let ss: Vec<f64> = self.z.iter().map(|v| (v - self.origin) * self.direction).collect();
        let i = match ss.binary_search_by(|v| v.partial_cmp(&s).expect("finite")) {
            Ok(i) => return Some((self.f[i], self.df[i])),
            Err(i) => i.clamp(1, ss.len() - 1) - 1,
        };
        let h = ss[i + 1] - ss[i];
        let t = (s - ss[i]) / h;
        let (f0, f1) = (self.f[i], self.f[i + 1]);
        let (d0, d1) = (self.df[i] * self.direction, self.df[i + 1] * self.direction);
        let h00 = 2.0 * t.powi(3) - 3.0 * t * t + 1.0;
        let h10 = t.powi(3) - 2.0 * t * t + t;
        let h01 = -2.0 * t.powi(3) + 3.0 * t * t;
        let h11 = t.powi(3) - t * t;
        let f = h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1;
        let ds = ((6.0 * t * t - 6.0 * t) * f0 + (3.0 * t * t - 4.0 * t + 1.0) * h * d0
            + (-6.0 * t * t + 6.0 * t) * f1
            + (3.0 * t * t - 2.0 * t) * h * d1)
            / h;
        Some((f, ds * self.direction))
    }
}

/// The equation in `s = ±(z − z₀) ≥ 0`, so both integrators always run forward.
struct Rhs<'a> {
    ode: &'a ProfileODE,
    origin: f64,
    direction: f64,
}

impl System<f64, Vector2<f64>> for Rhs<'_> {
    fn system(&self, s: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        let z = self.origin + self.direction * s;
        if self.ode.order == 2 {
            dy[0] = self.direction * y[1];
            dy[1] = self.direction * self.ode.derivative(z, y[0], y[1]);
        } else {
            dy[0] = self.direction * self.ode.derivative(z, y[0], 0.0);
            dy[1] = 0.0;
        }
    }
}

fn integration_error(e: ode_solvers::dop_shared::IntegrationError, origin: f64, direction: f64, last: Option<&Vector2<f64>>) -> Error {
    use ode_solvers::dop_shared::IntegrationError as E;
    let last_value = last.map(|y| vec![y[0], y[1]]).unwrap_or_default();
    let at = |s: f64| origin + direction * s;
    match e {
        E::MaxNumStepReached { x, n_step } => Error::Integration {
            at: at(x),
            reason: format!("step budget of {n_step} exhausted"),
            last_value,
        },
        E::StepSizeUnderflow { x } => Error::Integration {
            at: at(x),
            reason: "step size underflow".into(),
            last_value,
        },
        E::StiffnessDetected { x } => Error::Integration {
            at: at(x),
            reason: "problem became stiff".into(),
            last_value,
        },
    }
}

/// Integrate `ode` from `(z₀, f₀, f′₀)` to `z_end`. For first-order equations
/// `f′₀` is ignored.
pub fn integrate_profile(
    ode: &ProfileODE,
    initial: (f64, f64, f64),
    z_end: f64,
    options: &IntegratorOptions,
) -> Result<SampledProfile> {
    let (z0, f0, df0) = initial;
    if !(z0.is_finite() && z_end.is_finite() && z_end != z0) {
        return Err(Error::Precondition("integration span must be finite and non-empty".into()));
    }
    if ode
        .singular_points
        .iter()
        .any(|s| (s - z0) * (s - z_end) <= 0.0)
    {
        return Err(Error::Precondition(format!(
            "span [{z0}, {z_end}] touches a singular point of the {} equation",
            ode.family.name()
        )));
    }
    let direction = (z_end - z0).signum();
    let length = (z_end - z0).abs();
    let rhs = || Rhs { ode, origin: z0, direction };
    let y0 = Vector2::new(f0, if ode.order == 2 { df0 } else { 0.0 });
    let unpack = |s_out: &[f64], ys: &[Vector2<f64>]| {
        let z: Vec<f64> = s_out.iter().map(|s| z0 + direction * s).collect();
        let f: Vec<f64> = ys.iter().map(|y| y[0]).collect();
        let df = z
            .iter()
            .zip(ys)
            .map(|(zz, y)| if ode.order == 2 { y[1] } else { ode.derivative(*zz, y[0], 0.0) })
            .collect();
        (z, f, df)
    };
    match options.method {
        Method::Dopri5 => {
            let mut solver = Dopri5::from_param(
                rhs(),
                0.0,
                length,
                0.0,
                y0,
                options.rtol,
                options.atol,
                0.9,
                0.04,
                0.2,
                10.0,
                length,
                0.0,
                options.max_steps,
                1000,
                OutputType::Continuous,
            );
            let mut dense = ContinuousOutputModel::default();
            if let Err(e) = solver.integrate_with_continuous_output_model(&mut dense) {
                return Err(integration_error(e, z0, direction, solver.y_out().last()));
            }
            let mut s_out = vec![0.0];
            s_out.extend(solver.x_out());
            let mut ys = vec![y0];
            ys.extend(solver.y_out());
            let (z, f, df) = unpack(&s_out, &ys);
            Ok(SampledProfile {
                z,
                f,
                df,
                origin: z0,
                direction,
                order: ode.order,
                ode: ode.clone(),
                dense: Some(dense),
            })
        }
        Method::Rk4 { step } => {
            if !(step > 0.0) {
                return Err(Error::Precondition("RK4 step must be positive".into()));
            }
            // equal steps landing exactly on z_end
            let n = (length / step).ceil().max(1.0);
            let mut solver = Rk4::new(rhs(), 0.0, y0, length, length / n);
            if let Err(e) = solver.integrate() {
                return Err(integration_error(e, z0, direction, solver.y_out().last()));
            }
            let count = (n as usize + 1).min(solver.x_out().len());
            let mut s_out = solver.x_out()[..count].to_vec();
            s_out[count - 1] = s_out[count - 1].min(length);
            let (z, f, df) = unpack(&s_out, &solver.y_out()[..count]);
            Ok(SampledProfile {
                z,
                f,
                df,
                origin: z0,
                direction,
                order: ode.order,
                ode: ode.clone(),
                dense: None,
            })
        }
    }
}

/// One row of a numeric-versus-closed-form comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileRow {
    pub z: f64,
    pub numeric: f64,
    pub closed: f64,
    pub error: f64,
}

/// Integrate the family ODE from its seed at `z₀` and compare, at `samples`
/// equispaced points of `[z₀, z_end]`, with the closed form whose constant is
/// calibrated on the seed.
pub fn cross_validate(
    family: AnsatzFamily,
    k: Rational,
    c: f64,
    z0: f64,
    z_end: f64,
    samples: usize,
    options: &IntegratorOptions,
) -> Result<Vec<ProfileRow>> {
    let ode = reduce(&EquivariantAnsatz::new(family, k))?;
    let (f0, df0) = series_seed(family, z0, c)?;
    let c = calibrate_constant(family, z0, f0, df0)?;
    let profile = integrate_profile(&ode, (z0, f0, df0), z_end, options)?;
    let n = samples.max(2);
    (0..n)
        .map(|i| {
            let z = if i + 1 == n {
                z_end
            } else {
                z0 + (z_end - z0) * i as f64 / (n - 1) as f64
            };
            let numeric = profile.evaluate(z).ok_or_else(|| Error::Integration {
                at: z,
                reason: "sample outside the integrated span".into(),
                last_value: vec![],
            })?;
            let closed = closed_form_profile(family, z, c)?;
            Ok(ProfileRow {
                z,
                numeric: numeric.0,
                closed,
                error: (numeric.0 - closed).abs(),
            })
        })
        .collect()
}

/// A profile given as an expression in `z`, with symbolic derivatives.
#[derive(Debug, Clone)]
pub struct Profile {
    pub source: String,
    f: Expr,
    df: Expr,
    d2f: Expr,
}

impl Profile {
    pub fn parse(source: &str) -> Result<Self> {
        let f = Scope::new(&["z"]).parse(source)?;
        let df = f.diff(0);
        let d2f = df.diff(0);
        Ok(Profile {
            source: source.to_string(),
            f,
            df,
            d2f,
        })
    }

    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        (self.f.eval(&[z]), self.df.eval(&[z]), self.d2f.eval(&[z]))
    }
}

/// Reduced-equation residual of `profile` at the profile variable of `x`.
pub fn reduced_residual(ansatz: &EquivariantAnsatz, profile: &Profile, x: &[f64]) -> Result<f64> {
    let ode = reduce(ansatz)?;
    let z = ansatz.profile_variable(x)?;
    let (f, df, d2f) = profile.eval(z);
    Ok(ode.residual(z, f, df, d2f))
}

/// Rapidity `Ω` with `U = cosh Ω ∂₀ + sinh Ω ∂₁` on a chart whose first two
/// coordinates are `(x₄, r)`.
#[derive(Clone)]
pub struct RapidityField {
    pub chart: ChartDomain,
    pub omega: ScalarField,
    pub fd: FdPolicy,
}

impl RapidityField {
    pub fn new(chart: ChartDomain, omega: ScalarField) -> Self {
        RapidityField {
            chart,
            omega,
            fd: FdPolicy::default(),
        }
    }

    pub fn u_field(&self) -> VectorField {
        let m = self.chart.dimension();
        self.omega.map(move |w| {
            let mut u = nalgebra::DVector::zeros(m);
            u[0] = w.cosh();
            u[1] = w.sinh();
            Ok(u)
        })
    }
}

/// `cosh Ω (∂₄Ω + c ∂_r ln n) + sinh Ω (c ∂₄ ln n + ∂_r Ω)` with `c = 2k − 1`.
pub fn rapidity_residual(omega: &RapidityField, n: &ScalarField, k: Rational, x: &[f64]) -> Result<f64> {
    omega.chart.require(x)?;
    let c = to_f64(k * 2 - 1);
    let ln_n: ScalarField = n.map(|v| {
        if !(v > 0.0) {
            return Err(Error::Regime(format!("n = {v:.3e} is not positive")));
        }
        Ok(v.ln())
    });
    let dw = partials(&omega.omega, &omega.chart, x, &omega.fd)?;
    let dn = partials(&ln_n, &omega.chart, x, &omega.fd)?;
    let w = omega.omega.eval(x)?;
    Ok(w.cosh() * (dw[0] + c * dn[1]) + w.sinh() * (c * dn[0] + dw[1]))
}

/// `n = λ₁λ₂λ₃` of a sigma model as a field.
pub fn volume_field(model: &SigmaModel) -> ScalarField {
    model.sigma_field(3).map(|s| Ok(s.max(0.0).sqrt()))
}

/// Rapidity field of the HB-I flow, `Ω = arctanh(r/x₄)`.
pub fn scale_rapidity(chart: ChartDomain) -> RapidityField {
    RapidityField::new(chart, Field::new(|x: &[f64]| Ok((x[1] / x[0]).atanh())))
}
