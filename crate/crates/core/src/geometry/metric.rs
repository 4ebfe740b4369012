use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

use super::chart::ChartDomain;
use super::field::{partials, FdPolicy, Field, TensorField};

/// Number of negative and positive eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Signature {
    pub negatives: usize,
    pub positives: usize,
}

impl Signature {
    pub fn lorentzian(dim: usize) -> Self {
        Signature {
            negatives: 1,
            positives: dim - 1,
        }
    }

    pub fn riemannian(dim: usize) -> Self {
        Signature {
            negatives: 0,
            positives: dim,
        }
    }

    pub fn dimension(&self) -> usize {
        self.negatives + self.positives
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

const SYMMETRY_TOL: f64 = 1e-12;

/// Metric components over a chart, optionally with analytic first partials.
#[derive(Clone)]
pub struct MetricField {
    chart: ChartDomain,
    components: TensorField,
    derivatives: Option<Field<Vec<DMatrix<f64>>>>,
    signature: Signature,
    mode: DerivativeMode,
    fd: FdPolicy,
}

impl MetricField {
    pub fn new(chart: ChartDomain, components: TensorField, signature: Signature) -> Result<Self> {
        if signature.dimension() != chart.dimension() {
            return Err(Error::Dimension(format!(
                "signature {:?} does not match chart dimension {}",
                signature,
                chart.dimension()
            )));
        }
        Ok(MetricField {
            chart,
            components,
            derivatives: None,
            signature,
            mode: DerivativeMode::FiniteDifference,
            fd: FdPolicy::default(),
        })
    }

    /// Attach analytic partials `[∂_0 g, …, ∂_{m-1} g]`.
    pub fn with_derivatives(mut self, derivatives: Field<Vec<DMatrix<f64>>>) -> Self {
        self.derivatives = Some(derivatives);
        self.mode = DerivativeMode::Analytic;
        self
    }

    /// Ignore analytic partials and difference the components instead.
    pub fn force_fd(mut self) -> Self {
        self.mode = DerivativeMode::FiniteDifference;
        self
    }

    pub fn with_fd_policy(mut self, fd: FdPolicy) -> Self {
        self.fd = fd;
        self
    }

    pub fn chart(&self) -> &ChartDomain {
        &self.chart
    }

    pub fn dimension(&self) -> usize {
        self.chart.dimension()
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn fd_policy(&self) -> &FdPolicy {
        &self.fd
    }

    pub fn components(&self) -> &TensorField {
        &self.components
    }

    /// FD depth of connection-level quantities built from this metric.
    pub fn connection_depth(&self) -> u8 {
        match self.mode {
            DerivativeMode::Analytic => self.components.depth(),
            DerivativeMode::FiniteDifference => self.components.depth() + 1,
        }
    }

    /// Components at `x` without chart or signature checks.
    pub fn at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.components.eval(x)?;
        let m = self.dimension();
        if g.nrows() != m || g.ncols() != m {
            return Err(Error::Dimension(format!(
                "metric returned {}x{} matrix, expected {m}x{m}",
                g.nrows(),
                g.ncols()
            )));
        }
        Ok(g)
    }

    pub fn inverse_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        invert(&self.at(x)?, x)
    }

    /// Coordinate partials of the components at `x`.
    pub fn partials_at(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        match (&self.derivatives, self.mode) {
            (Some(d), DerivativeMode::Analytic) => d.eval(x),
            _ => partials(&self.components, &self.chart, x, &self.fd),
        }
    }

    /// Symmetry and signature check at a valid point.
    pub fn check(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.chart.require(x)?;
        let g = self.at(x)?;
        let scale = g.amax().max(1.0);
        let asym = (&g - g.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::InvalidCase(format!(
                "metric not symmetric at {x:?} (asymmetry {asym:.3e})"
            )));
        }
        let eig = SymmetricEigen::new(g.clone());
        let tol = 1e-12 * eig.eigenvalues.amax().max(1e-300);
        let found_neg = eig.eigenvalues.iter().filter(|v| **v < -tol).count();
        let found_pos = eig.eigenvalues.iter().filter(|v| **v > tol).count();
        if found_neg + found_pos < g.nrows() {
            return Err(Error::DegenerateMetric { point: x.to_vec() });
        }
        if found_neg != self.signature.negatives || found_pos != self.signature.positives {
            return Err(Error::Signature {
                point: x.to_vec(),
                neg: self.signature.negatives,
                pos: self.signature.positives,
                found_neg,
                found_pos,
            });
        }
        Ok(g)
    }

    /// Metric as a field, for use as a differentiable quantity.
    pub fn field(&self) -> TensorField {
        self.components.clone()
    }
}

pub(crate) fn invert(g: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    let inv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateMetric { point: x.to_vec() })?;
    let n = g.nrows();
    let err = (g * &inv - DMatrix::<f64>::identity(n, n)).amax();
    if !err.is_finite() || err > 1e-8 {
        return Err(Error::DegenerateMetric { point: x.to_vec() });
    }
    Ok(inv)
}

/// `g(u, v)`.
pub fn inner(g: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    (u.transpose() * g * v)[(0, 0)]
}

/// Lower an index: `X^♭ = g X`.
pub fn flat(g: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    g * v
}

/// Euclidean-metric helper used by flat test charts.
pub fn minkowski(dim: usize, time_index: usize) -> DMatrix<f64> {
    let mut g = DMatrix::<f64>::identity(dim, dim);
    g[(time_index, time_index)] = -1.0;
    g
}
