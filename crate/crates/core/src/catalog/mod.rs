//! Named exact-solution cases.
//!
//! A case is a JSON document (see [`schema::CaseSpec`]) whose metric, map and
//! expected fields are expressions over chart coordinates. Building a case
//! parses every expression once and differentiates the metric and the map
//! symbolically, so analytic jacobians and Christoffel symbols are always
//! available.

pub mod expr;
pub mod schema;

mod registry;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::energy_stress::{parse_rational, to_f64, LagrangianSpec, Rational};
use crate::error::{Error, Result};
use crate::fluid_equations::{EquationOfState, FluidState};
use crate::geometry::chart::{ChartDomain, Constraint};
use crate::geometry::field::{FdPolicy, Field, ScalarField, TensorField, VectorField};
use crate::geometry::metric::{MetricField, Signature};
use crate::map_calculus::{SigmaModel, SmoothMap};

use expr::{Expr, Scope};
use schema::{CaseSpec, ChartSpec, Definition, FlagValue, MetricSpec};

pub use registry::{case_names, case_spec, registry, registry_json};

/// Expected closed-form fluid fields.
#[derive(Clone)]
pub struct ExpectedFields {
    pub u: VectorField,
    pub rho: ScalarField,
    pub p: ScalarField,
}

/// `None` means the case makes no claim.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CaseFlags {
    pub shear_free: Option<bool>,
    pub irrotational: Option<bool>,
    pub accelerating: Option<bool>,
    pub gravity_coupled: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.n <= 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n)
            .map(|i| if i + 1 == self.n { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

/// Sample grid: a Cartesian product of axes mapped to chart points.
#[derive(Debug, Clone)]
pub struct Grid {
    pub axes: Vec<Axis>,
    point: Vec<Expr>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n.max(1)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis tuples in iteration order (last axis fastest).
    pub fn samples(&self) -> Vec<Vec<f64>> {
        let values: Vec<Vec<f64>> = self.axes.iter().map(Axis::values).collect();
        let mut out = vec![Vec::new()];
        for vals in &values {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        out
    }

    pub fn chart_point(&self, sample: &[f64]) -> Vec<f64> {
        self.point.iter().map(|e| e.eval(sample)).collect()
    }

    /// Chart points in iteration order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.samples().iter().map(|s| self.chart_point(s)).collect()
    }

    /// Replace the range of an existing axis.
    pub fn set_axis(&mut self, name: &str, lo: f64, hi: f64, n: usize) -> Result<()> {
        let axis = self
            .axes
            .iter_mut()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::InvalidCase(format!("grid has no axis `{name}`")))?;
        if n == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidCase(format!("bad range for axis `{name}`")));
        }
        *axis = Axis {
            name: name.to_string(),
            lo,
            hi,
            n,
        };
        Ok(())
    }
}

/// Parse `AX=lo:hi:n` (or `AX=value`) with numeric or constant expressions.
pub fn parse_axis_override(s: &str) -> Result<(String, f64, f64, usize)> {
    let bad = || Error::InvalidCase(format!("grid override `{s}` is not AX=lo:hi:n"));
    let (name, range) = s.split_once('=').ok_or_else(bad)?;
    let scope = Scope::new::<&str>(&[]);
    let num = |t: &str| -> Result<f64> {
        let v = scope.parse(t)?.eval(&[]);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad())
        }
    };
    let parts: Vec<&str> = range.split(':').collect();
    match parts.as_slice() {
        [v] => {
            let v = num(v)?;
            Ok((name.trim().to_string(), v, v, 1))
        }
        [lo, hi, n] => Ok((
            name.trim().to_string(),
            num(lo)?,
            num(hi)?,
            n.trim().parse().map_err(|_| bad())?,
        )),
        _ => Err(bad()),
    }
}

/// A fully built catalog case. Immutable and shareable across threads.
#[derive(Clone)]
pub struct SolutionCase {
    pub name: String,
    pub description: String,
    pub spec: CaseSpec,
    /// Resolved parameter values in declaration order.
    pub parameters: Vec<(String, f64)>,
    parameter_text: Vec<(String, String)>,
    pub k: Rational,
    pub model: SigmaModel,
    pub expected: ExpectedFields,
    pub expected_eigenvalues: Option<Vec<ScalarField>>,
    pub flags: CaseFlags,
    pub coupling: Option<f64>,
    pub reference_pressure: f64,
    pub temperature: Option<ScalarField>,
    pub grid: Grid,
}

/// Closed-form fluid sample at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidSample {
    pub u: Vec<f64>,
    pub rho: f64,
    pub p: f64,
}

impl SolutionCase {
    /// Name with its parameters, e.g. `skew_projection(q=1)`.
    pub fn label(&self) -> String {
        if self.parameter_text.is_empty() {
            return self.name.clone();
        }
        let args: Vec<String> = self.parameter_text.iter().map(|(n, v)| format!("{n}={v}")).collect();
        format!("{}({})", self.name, args.join(","))
    }

    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn lagrangian(&self) -> Result<LagrangianSpec> {
        LagrangianSpec::sigma3_power(self.k)
    }

    pub fn eos_ratio(&self) -> Rational {
        self.k * 2 - 1
    }

    pub fn eos(&self) -> EquationOfState {
        EquationOfState::from_exponent(self.k, self.reference_pressure)
    }

    pub fn expected_fluid(&self) -> FluidState {
        FluidState::new(self.expected.u.clone(), self.expected.rho.clone(), self.expected.p.clone())
    }

    /// Fluid induced by the map: `U` from the kernel, `ρ = σ₃^k`, `p = (2k−1)ρ`.
    pub fn map_fluid(&self) -> FluidState {
        FluidState::from_model(&self.model, to_f64(self.k), to_f64(self.eos_ratio()))
    }

    pub fn metric(&self) -> &MetricField {
        &self.model.g
    }

    /// Same case with every derivative taken by finite differences.
    pub fn force_fd(&self) -> SolutionCase {
        let mut c = self.clone();
        c.model = c.model.force_fd();
        c
    }

    pub fn with_fd_policy(&self, fd: FdPolicy) -> SolutionCase {
        let mut c = self.clone();
        c.model = c.model.with_fd_policy(fd);
        c
    }

    pub fn evaluate_expected(&self, x: &[f64]) -> Result<FluidSample> {
        evaluate_expected(self, x)
    }
}

/// Closed-form `(U, ρ, p)` at `x`.
pub fn evaluate_expected(case: &SolutionCase, x: &[f64]) -> Result<FluidSample> {
    case.model.g.chart().require(x)?;
    Ok(FluidSample {
        u: case.expected.u.eval(x)?.as_slice().to_vec(),
        rho: case.expected.rho.eval(x)?,
        p: case.expected.p.eval(x)?,
    })
}

/// Load a registered case. Parameters may follow the name:
/// `hb1_power(1/2)`, `einstein_universe(omega2=0)`.
pub fn load_case(name: &str) -> Result<SolutionCase> {
    let (base, args) = split_call(name)?;
    let spec = case_spec(&base)?;
    build_case(&spec, &args)
}

/// Build a case from its JSON text, with optional parameter overrides.
pub fn case_from_json(text: &str, overrides: &[(String, String)]) -> Result<SolutionCase> {
    let spec: CaseSpec = serde_json::from_str(text).map_err(|e| Error::InvalidCase(e.to_string()))?;
    let args = overrides.iter().map(|(n, v)| (Some(n.clone()), v.clone())).collect::<Vec<_>>();
    build_case(&spec, &args)
}

type Args = Vec<(Option<String>, String)>;

/// Parameter scope, numeric parameter values and their source texts.
type Bindings = (Scope, Vec<(String, f64)>, Vec<(String, String)>);

fn split_call(name: &str) -> Result<(String, Args)> {
    let name = name.trim();
    let Some(open) = name.find('(') else {
        return Ok((name.to_string(), Vec::new()));
    };
    if !name.ends_with(')') {
        return Err(Error::InvalidCase(format!("unbalanced parameter list in `{name}`")));
    }
    let inner = &name[open + 1..name.len() - 1];
    let args = inner
        .split(',')
        .map(str::trim)
        .filter(|a| !a.is_empty())
        .map(|a| match a.split_once('=') {
            Some((n, v)) => (Some(n.trim().to_string()), v.trim().to_string()),
            None => (None, a.to_string()),
        })
        .collect();
    Ok((name[..open].trim().to_string(), args))
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("{what} is not finite here")))
    }
}

fn scalar_field(e: Expr, what: String) -> ScalarField {
    Field::new(move |x| finite(e.eval(x), &what))
}

fn vector_field(es: Vec<Expr>, what: String) -> VectorField {
    Field::new(move |x| {
        let v: Result<Vec<f64>> = es.iter().map(|e| finite(e.eval(x), &what)).collect();
        Ok(DVector::from_vec(v?))
    })
}

fn matrix_field(es: Vec<Vec<Expr>>, what: String) -> TensorField {
    let rows = es.len();
    let cols = es.first().map_or(0, Vec::len);
    Field::new(move |x| {
        let mut m = DMatrix::zeros(rows, cols);
        for (i, row) in es.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                m[(i, j)] = finite(e.eval(x), &what)?;
            }
        }
        Ok(m)
    })
}

fn eval_constant(scope: &Scope, src: &str, what: &str) -> Result<f64> {
    let v = scope.parse(src)?.eval(&[]);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidCase(format!("{what} `{src}` does not evaluate to a number")))
    }
}

struct BuiltChart {
    chart: ChartDomain,
    scope: Scope,
    metric: Vec<Vec<Expr>>,
}

fn build_chart(spec: &ChartSpec, params: &Scope, extra: &[Definition], what: &str) -> Result<BuiltChart> {
    let mut scope = params.rebased(&spec.coordinates);
    for d in spec.definitions.iter().chain(extra) {
        scope.define(&d.name, &d.expr)?;
    }
    let m = spec.coordinates.len();
    let mut chart = ChartDomain::new(&spec.coordinates)?;
    if let Some(t) = &spec.time {
        let i = spec
            .coordinates
            .iter()
            .position(|c| c == t)
            .ok_or_else(|| Error::InvalidCase(format!("{what} time coordinate `{t}` is not a coordinate")))?;
        chart = chart.with_time(i);
    }
    for c in &spec.constraints {
        let e = scope.parse(&c.margin)?;
        chart = chart.with_constraint(Constraint::new(c.label.clone(), move |x| {
            let v = e.eval(x);
            if v.is_nan() {
                f64::NEG_INFINITY
            } else {
                v
            }
        }));
    }
    let metric = match &spec.metric {
        MetricSpec::Diagonal { diagonal } => {
            if diagonal.len() != m {
                return Err(Error::InvalidCase(format!("{what} metric diagonal needs {m} entries")));
            }
            let mut rows = vec![vec![Expr::constant(0.0); m]; m];
            for (i, src) in diagonal.iter().enumerate() {
                rows[i][i] = scope.parse(src)?;
            }
            rows
        }
        MetricSpec::Full { matrix } => {
            if matrix.len() != m || matrix.iter().any(|r| r.len() != m) {
                return Err(Error::InvalidCase(format!("{what} metric matrix must be {m}×{m}")));
            }
            let mut rows = vec![vec![Expr::constant(0.0); m]; m];
            for i in 0..m {
                for j in i..m {
                    let e = scope.parse(&matrix[i][j])?;
                    rows[i][j] = e.clone();
                    rows[j][i] = e;
                }
            }
            rows
        }
    };
    Ok(BuiltChart { chart, scope, metric })
}

fn metric_field(built: &BuiltChart, signature: Signature, what: &str) -> Result<MetricField> {
    let m = built.metric.len();
    let components = matrix_field(built.metric.clone(), format!("{what} metric"));
    let partials: Vec<Vec<Vec<Expr>>> = (0..m)
        .map(|a| built.metric.iter().map(|row| row.iter().map(|e| e.diff(a)).collect()).collect())
        .collect();
    let what = format!("{what} metric derivative");
    let derivatives: Field<Vec<DMatrix<f64>>> = Field::new(move |x| {
        partials
            .iter()
            .map(|p| {
                let mut d = DMatrix::zeros(m, m);
                for (i, row) in p.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        d[(i, j)] = finite(e.eval(x), &what)?;
                    }
                }
                Ok(d)
            })
            .collect()
    });
    Ok(MetricField::new(built.chart.clone(), components, signature)?.with_derivatives(derivatives))
}

fn flag(value: &Option<FlagValue>, params: &Scope) -> Result<Option<bool>> {
    Ok(match value {
        None => None,
        Some(FlagValue::Fixed(b)) => Some(*b),
        Some(FlagValue::Condition(src)) => match src.trim().strip_prefix('!') {
            Some(rest) => Some(eval_constant(params, rest, "flag condition")? == 0.0),
            None => Some(eval_constant(params, src, "flag condition")? != 0.0),
        },
    })
}

/// Resolve parameters: positional arguments first, then named ones.
fn resolve_parameters(spec: &CaseSpec, args: &[(Option<String>, String)]) -> Result<Bindings> {
    let mut given: HashMap<String, String> = HashMap::new();
    let mut positional = 0;
    for (name, value) in args {
        let name = match name {
            Some(n) => n.clone(),
            None => {
                let p = spec.parameters.get(positional).ok_or_else(|| {
                    Error::InvalidCase(format!("`{}` takes {} parameters", spec.name, spec.parameters.len()))
                })?;
                positional += 1;
                p.name.clone()
            }
        };
        if !spec.parameters.iter().any(|p| p.name == name) {
            return Err(Error::InvalidCase(format!("`{}` has no parameter `{name}`", spec.name)));
        }
        if given.insert(name.clone(), value.clone()).is_some() {
            return Err(Error::InvalidCase(format!("parameter `{name}` given twice")));
        }
    }
    let mut scope = Scope::new::<&str>(&[]);
    let mut values = Vec::new();
    let mut text = Vec::new();
    for p in &spec.parameters {
        let src = given.get(&p.name).cloned().unwrap_or_else(|| p.default.clone());
        let v = eval_constant(&scope, &src, &format!("parameter `{}`", p.name))?;
        scope.bind_value(&p.name, v);
        values.push((p.name.clone(), v));
        text.push((p.name.clone(), src));
    }
    Ok((scope, values, text))
}

fn model_in_scope(
    domain_spec: &ChartSpec,
    codomain_spec: &ChartSpec,
    definitions: &[Definition],
    map: &[String],
    params: &Scope,
) -> Result<(SigmaModel, BuiltChart)> {
    let domain = build_chart(domain_spec, params, definitions, "domain")?;
    let codomain = build_chart(codomain_spec, params, &[], "codomain")?;
    let m = domain_spec.coordinates.len();
    let n = codomain_spec.coordinates.len();
    if map.len() != n {
        return Err(Error::InvalidCase(format!("map needs {n} components, found {}", map.len())));
    }
    if domain_spec.time.is_none() {
        return Err(Error::InvalidCase("domain chart must name its time coordinate".into()));
    }
    let g = metric_field(&domain, Signature::lorentzian(m), "domain")?;
    let h = metric_field(&codomain, Signature::riemannian(n), "codomain")?;
    let map_exprs: Vec<Expr> = map.iter().map(|s| domain.scope.parse(s)).collect::<Result<_>>()?;
    let jac: Vec<Vec<Expr>> = map_exprs
        .iter()
        .map(|e| (0..m).map(|a| e.diff(a)).collect())
        .collect();
    let smooth = SmoothMap::new(
        domain.chart.clone(),
        codomain.chart.clone(),
        vector_field(map_exprs, "map".into()),
    )
    .with_jacobian(matrix_field(jac, "map jacobian".into()));
    Ok((SigmaModel::new(smooth, g, h)?, domain))
}

/// Sigma model from chart specifications and map expressions, with
/// symbolic jacobian and metric derivatives.
pub fn build_model(
    domain: &ChartSpec,
    codomain: &ChartSpec,
    definitions: &[Definition],
    map: &[String],
    parameters: &[(String, f64)],
) -> Result<SigmaModel> {
    let mut params = Scope::new::<&str>(&[]);
    for (name, v) in parameters {
        params.bind_value(name, *v);
    }
    Ok(model_in_scope(domain, codomain, definitions, map, &params)?.0)
}

/// Metric of a chart specification, with symbolic partials.
pub fn build_metric(spec: &ChartSpec, signature: Signature, parameters: &[(String, f64)]) -> Result<MetricField> {
    let mut params = Scope::new::<&str>(&[]);
    for (name, v) in parameters {
        params.bind_value(name, *v);
    }
    let built = build_chart(spec, &params, &[], "chart")?;
    metric_field(&built, signature, "chart")
}

/// Build a case from its specification and parameter arguments.
pub fn build_case(spec: &CaseSpec, args: &[(Option<String>, String)]) -> Result<SolutionCase> {
    let (params, parameters, parameter_text) = resolve_parameters(spec, args)?;
    for r in &spec.requires {
        if !(eval_constant(&params, &r.expr, "requirement")? > 0.0) {
            return Err(Error::InvalidCase(format!("{}: {}", spec.name, r.message)));
        }
    }
    let k_text = parameter_text
        .iter()
        .find(|(n, _)| *n == spec.k)
        .map(|(_, v)| v.clone())
        .unwrap_or_else(|| spec.k.clone());
    let k = parse_rational(&k_text)?;

    let (model, domain) = model_in_scope(&spec.domain, &spec.codomain, &spec.definitions, &spec.map, &params)?;
    let m = spec.domain.coordinates.len();
    let n = spec.codomain.coordinates.len();

    let parse_all = |srcs: &[String]| -> Result<Vec<Expr>> { srcs.iter().map(|s| domain.scope.parse(s)).collect() };
    if spec.expected.u.len() != m {
        return Err(Error::InvalidCase(format!("expected U needs {m} components")));
    }
    let expected = ExpectedFields {
        u: vector_field(parse_all(&spec.expected.u)?, "expected U".into()),
        rho: scalar_field(domain.scope.parse(&spec.expected.rho)?, "expected ρ".into()),
        p: scalar_field(domain.scope.parse(&spec.expected.p)?, "expected p".into()),
    };
    let expected_eigenvalues = match &spec.expected_eigenvalues {
        None => None,
        Some(list) => {
            if list.len() != n {
                return Err(Error::InvalidCase(format!("expected eigenvalues need {n} entries")));
            }
            Some(
                parse_all(list)?
                    .into_iter()
                    .map(|e| scalar_field(e, "expected eigenvalue".into()))
                    .collect(),
            )
        }
    };
    let temperature = match &spec.temperature {
        None => None,
        Some(src) => Some(scalar_field(domain.scope.parse(src)?, "temperature".into())),
    };
    let flags = CaseFlags {
        shear_free: flag(&spec.flags.shear_free, &params)?,
        irrotational: flag(&spec.flags.irrotational, &params)?,
        accelerating: flag(&spec.flags.accelerating, &params)?,
        gravity_coupled: flag(&spec.flags.gravity_coupled, &params)?,
    };
    let coupling = match &spec.coupling {
        None => None,
        Some(src) => Some(eval_constant(&params, src, "coupling")?),
    };
    let reference_pressure = eval_constant(&params, &spec.reference_pressure, "reference pressure")?;

    let axes: Vec<Axis> = spec
        .grid
        .axes
        .iter()
        .map(|a| {
            Ok(Axis {
                name: a.name.clone(),
                lo: eval_constant(&params, &a.lo, "grid bound")?,
                hi: eval_constant(&params, &a.hi, "grid bound")?,
                n: a.n.max(1),
            })
        })
        .collect::<Result<_>>()?;
    let names: Vec<&str> = axes.iter().map(|a| a.name.as_str()).collect();
    let axis_scope = params.rebased(&names);
    let point = match &spec.grid.point {
        Some(list) => {
            if list.len() != m {
                return Err(Error::InvalidCase(format!("grid point needs {m} entries")));
            }
            list.iter().map(|s| axis_scope.parse(s)).collect::<Result<Vec<_>>>()?
        }
        None => spec
            .domain
            .coordinates
            .iter()
            .map(|c| axis_scope.parse(c))
            .collect::<Result<Vec<_>>>()
            .map_err(|_| Error::InvalidCase("grid without `point` needs one axis per coordinate".into()))?,
    };

    Ok(SolutionCase {
        name: spec.name.clone(),
        description: spec.description.clone(),
        spec: spec.clone(),
        parameters,
        parameter_text,
        k,
        model,
        expected,
        expected_eigenvalues,
        flags,
        coupling,
        reference_pressure,
        temperature,
        grid: Grid { axes, point },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn call_syntax() {
        let (n, a) = split_call("einstein_universe(0.3, omega2=0)").unwrap();
        assert_eq!(n, "einstein_universe");
        assert_eq!(a, vec![(None, "0.3".into()), (Some("omega2".into()), "0".into())]);
        assert!(split_call("x(1").is_err());
    }

    #[test]
    fn axis_values_hit_both_ends() {
        let a = Axis {
            name: "x".into(),
            lo: 0.1,
            hi: 0.8,
            n: 8,
        };
        let v = a.values();
        assert_eq!(v.len(), 8);
        assert_eq!(v[0], 0.1);
        assert_eq!(v[7], 0.8);
    }

    #[test]
    fn axis_override_syntax() {
        assert_eq!(parse_axis_override("x4=1.5:3:4").unwrap(), ("x4".into(), 1.5, 3.0, 4));
        assert_eq!(parse_axis_override("s=pi/2").unwrap().1, std::f64::consts::FRAC_PI_2);
        assert!(parse_axis_override("s:1").is_err());
    }
}
