//! Grid verification of catalog cases and the reports built from it.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{CaseFlags, SolutionCase};
use crate::energy_stress::{fluid_tensor, perfect_fluid_extract, stress_tensor, to_f64};
use crate::error::{Error, Result};
use crate::fluid_equations::{
    acceleration_norm, energy_conservation_residual, euler_residual, heat_flow, integrability_two_form,
    particle_conservation_residual, shear_tensor,
};
use crate::geometry::field::FdPolicy;
use crate::gravity::{einstein_residual_as, Convention};
use crate::map_calculus::horizontal_conformality_check;

pub const TOOL: &str = concat!("sigmafluid ", env!("CARGO_PKG_VERSION"));

/// Threshold above which a quantity counts as nonzero in flag checks.
pub const NONZERO_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    Euler,
    Energy,
    Particle,
    Eos,
    Pipeline,
    Eigenvalues,
    Shear,
    Vorticity,
    Acceleration,
    HeatFlow,
    Conformality,
    Einstein,
}

impl Equation {
    pub const ALL: [Equation; 12] = [
        Equation::Euler,
        Equation::Energy,
        Equation::Particle,
        Equation::Eos,
        Equation::Pipeline,
        Equation::Eigenvalues,
        Equation::Shear,
        Equation::Vorticity,
        Equation::Acceleration,
        Equation::HeatFlow,
        Equation::Conformality,
        Equation::Einstein,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Equation::Euler => "euler",
            Equation::Energy => "energy",
            Equation::Particle => "particle",
            Equation::Eos => "eos",
            Equation::Pipeline => "pipeline",
            Equation::Eigenvalues => "eigenvalues",
            Equation::Shear => "shear",
            Equation::Vorticity => "vorticity",
            Equation::Acceleration => "acceleration",
            Equation::HeatFlow => "heat_flow",
            Equation::Conformality => "conformality",
            Equation::Einstein => "einstein",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|e| e.name()).collect();
            Error::InvalidCase(format!("unknown equation `{s}` (one of {})", names.join(", ")))
        })
    }

    /// Default tolerance for (analytic, finite-difference) derivatives.
    pub fn default_tolerance(&self) -> (f64, f64) {
        match self {
            Equation::Euler | Equation::Energy | Equation::Particle | Equation::HeatFlow => (1e-6, 1e-4),
            Equation::Eos => (1e-12, 1e-12),
            Equation::Pipeline | Equation::Eigenvalues => (1e-8, 1e-6),
            Equation::Shear | Equation::Vorticity | Equation::Acceleration => (1e-6, 1e-4),
            Equation::Conformality => (1e-6, 1e-6),
            Equation::Einstein => (1e-5, 1e-4),
        }
    }

    fn what(&self) -> &'static str {
        match self {
            Equation::Euler => "largest component of the horizontal Euler 1-form",
            Equation::Energy => "|U(ρ) + (ρ+p) div U|",
            Equation::Particle => "|div(nU)| with n = λ₁λ₂λ₃",
            Equation::Eos => "|p − (2k−1)ρ| / |ρ| of the extracted fluid",
            Equation::Pipeline => "largest relative deviation of map-derived (U, ρ, p) from the closed form",
            Equation::Eigenvalues => "largest relative deviation of Λᵢ from the closed form",
            Equation::Shear => "norm of the horizontal shear",
            Equation::Vorticity => "relative H×H norm of d((U/f)^♭)",
            Equation::Acceleration => "norm of ∇_U U",
            Equation::HeatFlow => "largest component of grad^H T + T ∇_U U",
            Equation::Conformality => "largest relative gap between horizontal eigenvalues",
            Equation::Einstein => "largest component of G − αS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TolSource {
    Default,
    Override,
}

/// What the case asserts about an equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// Must vanish on the grid.
    Zero,
    /// Must exceed the nonzero threshold somewhere on the grid.
    Nonzero,
    /// Reported only.
    None,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquationReport {
    pub equation: Equation,
    pub measures: &'static str,
    pub claim: Claim,
    pub max: f64,
    pub mean: f64,
    pub tolerance: f64,
    pub tolerance_source: TolSource,
    pub status: Status,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub axes: Vec<crate::catalog::Axis>,
    pub coordinates: Vec<String>,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub alpha: f64,
    /// `G = α S`: the form the coupled system is checked in.
    pub stress_convention_max: f64,
    /// `G = α T` with `α` read literally.
    pub fluid_convention_max: f64,
    pub passed: Vec<Convention>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Conventions {
    pub fluid_tensor: &'static str,
    pub coupling: &'static str,
    pub derivatives: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub tool: &'static str,
    pub case: String,
    pub k: String,
    pub flags: CaseFlags,
    pub conventions: Conventions,
    pub grid: GridReport,
    pub equations: Vec<EquationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingReport>,
    pub pass: bool,
    #[serde(skip)]
    pub rows: Vec<PointRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointRow {
    pub sample: Vec<f64>,
    pub point: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Equations to evaluate; all applicable ones when empty.
    pub equations: Vec<Equation>,
    pub tolerances: Vec<(Equation, f64)>,
    pub grid: Vec<(String, f64, f64, usize)>,
    pub force_fd: bool,
    pub fd_base: Option<f64>,
    /// Worker threads; `SIGMAFLUID_THREADS` or the rayon default when `None`.
    pub threads: Option<usize>,
}

fn applicable(case: &SolutionCase, eq: Equation) -> bool {
    match eq {
        Equation::Eigenvalues => case.expected_eigenvalues.is_some(),
        Equation::HeatFlow => case.temperature.is_some(),
        Equation::Einstein => case.flags.gravity_coupled == Some(true) && case.coupling.is_some(),
        _ => true,
    }
}

fn claim(flags: &CaseFlags, eq: Equation) -> Claim {
    let from = |flag: Option<bool>, zero_when: bool| match flag {
        Some(v) if v == zero_when => Claim::Zero,
        Some(_) => Claim::Nonzero,
        None => Claim::None,
    };
    match eq {
        Equation::Shear => from(flags.shear_free, true),
        Equation::Vorticity => from(flags.irrotational, true),
        Equation::Acceleration => from(flags.accelerating, false),
        Equation::Conformality => Claim::None,
        _ => Claim::Zero,
    }
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.abs().max(f64::MIN_POSITIVE)
}

fn evaluate(case: &SolutionCase, eq: Equation, x: &[f64]) -> Result<f64> {
    let g = case.metric();
    match eq {
        Equation::Euler => Ok(euler_residual(&case.map_fluid(), g, x)?.amax()),
        Equation::Energy => Ok(energy_conservation_residual(&case.map_fluid(), g, x)?.abs()),
        Equation::Particle => Ok(particle_conservation_residual(&case.model, x)?.abs()),
        Equation::Eos => {
            let d = case.model.decompose(x)?;
            let e = perfect_fluid_extract(&fluid_tensor(&stress_tensor(&case.lagrangian()?, &d)?), &d.metric, &d.u)?;
            Ok(rel(e.p, to_f64(case.eos_ratio()) * e.rho, e.rho))
        }
        Equation::Pipeline => {
            let d = case.model.decompose(x)?;
            let e = perfect_fluid_extract(&fluid_tensor(&stress_tensor(&case.lagrangian()?, &d)?), &d.metric, &d.u)?;
            let want = case.evaluate_expected(x)?;
            let mut worst = rel(e.rho, want.rho, want.rho).max(rel(e.p, want.p, want.rho.abs().max(want.p.abs())));
            let scale = want.u.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (a, b) in d.u.iter().zip(&want.u) {
                worst = worst.max((a - b).abs() / scale);
            }
            Ok(worst)
        }
        Equation::Eigenvalues => {
            let d = case.model.decompose(x)?;
            let fields = case.expected_eigenvalues.as_ref().expect("applicable");
            let mut want = fields.iter().map(|f| f.eval(x)).collect::<Result<Vec<f64>>>()?;
            want.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
            let mut got = d.eigenvalues.clone();
            got.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
            Ok(want.iter().zip(&got).map(|(w, v)| rel(*v, *w, *w)).fold(0.0, f64::max))
        }
        Equation::Shear => Ok(shear_tensor(&case.map_fluid().u, g, x)?.norm),
        Equation::Vorticity => Ok(integrability_two_form(&case.map_fluid(), &case.eos(), g, x)?.relative),
        Equation::Acceleration => acceleration_norm(&case.map_fluid().u, g, x),
        Equation::HeatFlow => {
            let t = case.temperature.as_ref().expect("applicable");
            Ok(heat_flow(&case.map_fluid().u, t, g, x)?.amax())
        }
        Equation::Conformality => {
            let d = case.model.decompose(x)?;
            Ok(horizontal_conformality_check(&d, 1e-6).max_relative_gap)
        }
        Equation::Einstein => {
            let d = case.model.decompose(x)?;
            let s = stress_tensor(&case.lagrangian()?, &d)?;
            einstein_residual_as(g, &s, case.coupling.expect("applicable"), Convention::Stress, x)
        }
    }
}

fn thread_count(opts: &VerifyOptions) -> Option<usize> {
    opts.threads.or_else(|| {
        std::env::var("SIGMAFLUID_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|n| *n > 0)
    })
}

/// Run `f` on a pool capped by the options or `SIGMAFLUID_THREADS`.
pub fn with_pool<T: Send>(opts: &VerifyOptions, f: impl FnOnce() -> T + Send) -> Result<T> {
    match thread_count(opts) {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Apply grid and derivative options to a case.
pub fn prepare_case(case: &SolutionCase, opts: &VerifyOptions) -> Result<SolutionCase> {
    let mut case = case.clone();
    for (name, lo, hi, n) in &opts.grid {
        case.grid.set_axis(name, *lo, *hi, *n)?;
    }
    if let Some(h) = opts.fd_base {
        case = case.with_fd_policy(FdPolicy::with_base(h)?);
    }
    if opts.force_fd {
        case = case.force_fd();
    }
    Ok(case)
}

/// Evaluate the selected equations on the case grid.
pub fn verify_case(case: &SolutionCase, opts: &VerifyOptions) -> Result<VerificationReport> {
    let case = prepare_case(case, opts)?;
    let fd = opts.force_fd;
    let selected: Vec<Equation> = if opts.equations.is_empty() {
        Equation::ALL.to_vec()
    } else {
        opts.equations.clone()
    };
    let equations: Vec<Equation> = selected.into_iter().filter(|e| applicable(&case, *e)).collect();
    if equations.is_empty() {
        return Err(Error::InvalidCase(format!("no selected equation applies to {}", case.label())));
    }
    let samples = case.grid.samples();
    let chart = case.metric().chart().clone();
    for s in &samples {
        chart.require(&case.grid.chart_point(s))?;
    }
    let rows: Vec<PointRow> = with_pool(opts, || {
        samples
            .par_iter()
            .map(|s| {
                let point = case.grid.chart_point(s);
                let values = equations
                    .iter()
                    .map(|eq| evaluate(&case, *eq, &point))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(PointRow {
                    sample: s.clone(),
                    point,
                    values,
                })
            })
            .collect::<Result<Vec<PointRow>>>()
    })??;

    let mut reports = Vec::new();
    for (j, eq) in equations.iter().enumerate() {
        let column: Vec<f64> = rows.iter().map(|r| r.values[j]).collect();
        let max = column.iter().fold(0.0, |m: f64, v| m.max(*v));
        let mean = column.iter().sum::<f64>() / column.len() as f64;
        let (tolerance, tolerance_source) = match opts.tolerances.iter().rev().find(|(e, _)| e == eq) {
            Some((_, t)) => (*t, TolSource::Override),
            None => {
                let (a, f) = eq.default_tolerance();
                (if fd { f } else { a }, TolSource::Default)
            }
        };
        let claim = claim(&case.flags, *eq);
        let (status, note) = match claim {
            Claim::Zero if max < tolerance => (Status::Pass, String::new()),
            Claim::Zero => (Status::Fail, format!("expected below {tolerance:e}")),
            Claim::Nonzero if max > NONZERO_TOL => (
                Status::Info,
                format!("nonzero as the case declares (exceeds {NONZERO_TOL:e})"),
            ),
            Claim::Nonzero => (Status::Fail, format!("case declares this nonzero but max is below {NONZERO_TOL:e}")),
            Claim::None => {
                let note = if max < tolerance {
                    "vanishes on the grid"
                } else {
                    "nonzero on the grid"
                };
                (Status::Info, note.to_string())
            }
        };
        reports.push(EquationReport {
            equation: *eq,
            measures: eq.what(),
            claim,
            max,
            mean,
            tolerance,
            tolerance_source,
            status,
            note,
        });
    }

    let coupling = if equations.contains(&Equation::Einstein) {
        let alpha = case.coupling.expect("applicable");
        let spec = case.lagrangian()?;
        let (mut s_max, mut f_max) = (0.0f64, 0.0f64);
        for r in &rows {
            let d = case.model.decompose(&r.point)?;
            let s = stress_tensor(&spec, &d)?;
            s_max = s_max.max(einstein_residual_as(case.metric(), &s, alpha, Convention::Stress, &r.point)?);
            f_max = f_max.max(einstein_residual_as(case.metric(), &s, alpha, Convention::Fluid, &r.point)?);
        }
        let tol = reports
            .iter()
            .find(|r| r.equation == Equation::Einstein)
            .map(|r| r.tolerance)
            .expect("einstein report");
        let mut passed = Vec::new();
        if s_max < tol {
            passed.push(Convention::Stress);
        }
        if f_max < tol {
            passed.push(Convention::Fluid);
        }
        Some(CouplingReport {
            alpha,
            stress_convention_max: s_max,
            fluid_convention_max: f_max,
            passed,
        })
    } else {
        None
    };

    let pass = reports.iter().all(|r| r.status != Status::Fail);
    let fd_policy = case.metric().fd_policy();
    Ok(VerificationReport {
        tool: TOOL,
        case: case.label(),
        k: case.k.to_string(),
        flags: case.flags,
        conventions: Conventions {
            fluid_tensor: "T = -2 S",
            coupling: "G = alpha S, equivalently G = alpha_T T with alpha_T = -alpha/2",
            derivatives: if fd {
                format!("finite differences, base step {:e}", fd_policy.base())
            } else {
                "analytic jacobians and metric partials".to_string()
            },
        },
        grid: GridReport {
            axes: case.grid.axes.clone(),
            coordinates: chart.names().to_vec(),
            points: rows.len(),
        },
        equations: reports,
        coupling,
        pass,
        rows,
    })
}

/// `{:.16e}`: 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    fn columns(&self) -> Vec<&'static str> {
        self.equations.iter().map(|e| e.equation.name()).collect()
    }

    /// One row per grid point: chart coordinates, then residual columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<String> = self.grid.coordinates.clone();
        header.extend(self.columns().iter().map(|s| s.to_string()));
        out.push_str(&header.join(","));
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.point.iter().chain(&r.values).map(|v| fmt17(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Heatmap table over the named grid axes.
    pub fn to_scan_csv(&self, axes: &[&str]) -> Result<String> {
        let idx = axes
            .iter()
            .map(|a| {
                self.grid
                    .axes
                    .iter()
                    .position(|x| x.name == *a)
                    .ok_or_else(|| Error::InvalidCase(format!("grid has no axis `{a}`")))
            })
            .collect::<Result<Vec<usize>>>()?;
        let mut out = String::new();
        let mut header: Vec<String> = axes.iter().map(|s| s.to_string()).collect();
        header.extend(self.columns().iter().map(|s| s.to_string()));
        out.push_str(&header.join(","));
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = idx
                .iter()
                .map(|i| r.sample[*i])
                .chain(r.values.iter().copied())
                .map(fmt17)
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        Ok(out)
    }

    /// Per-equation summary as CSV.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("equation,claim,max,mean,tolerance,tolerance_source,status\n");
        for e in &self.equations {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                e.equation.name(),
                serde_json::to_value(e.claim).expect("claim").as_str().unwrap_or(""),
                fmt17(e.max),
                fmt17(e.mean),
                fmt17(e.tolerance),
                serde_json::to_value(e.tolerance_source).expect("source").as_str().unwrap_or(""),
                serde_json::to_value(e.status).expect("status").as_str().unwrap_or(""),
            );
        }
        out
    }

    /// Human summary.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} (k = {}), {} grid points, {}", self.case, self.k, self.grid.points, self.conventions.derivatives);
        for e in &self.equations {
            let status = match e.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Info => "info",
            };
            let _ = write!(out, "  {:<13} {:<4} max {:.3e}  mean {:.3e}  tol {:.1e}", e.equation.name(), status, e.max, e.mean, e.tolerance);
            if !e.note.is_empty() {
                let _ = write!(out, "  ({})", e.note);
            }
            out.push('\n');
        }
        if let Some(c) = &self.coupling {
            let _ = writeln!(
                out,
                "  coupling α = {}: G = αS max {:.3e}, G = αT max {:.3e}",
                c.alpha, c.stress_convention_max, c.fluid_convention_max
            );
        }
        let _ = writeln!(out, "{}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}
