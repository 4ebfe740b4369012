use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::connection::{christoffel_unchecked, covariant_derivative, divergence};
use super::field::{vector_jacobian, Field, ScalarField, VectorField};
use super::metric::{inner, MetricField};

const NULL_TOL: f64 = 1e-10;

/// g-orthonormal vectors with their causal signs.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameField {
    pub vectors: Vec<DVector<f64>>,
    pub signs: Vec<f64>,
}

impl FrameField {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Largest deviation of `g(e_i, e_j)` from `ε_i δ_ij`.
    pub fn orthonormality_defect(&self, g: &DMatrix<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            for j in 0..self.len() {
                let want = if i == j { self.signs[i] } else { 0.0 };
                worst = worst.max((inner(g, &self.vectors[i], &self.vectors[j]) - want).abs());
            }
        }
        worst
    }

    /// Columns are the frame vectors.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.vectors)
    }
}

/// Which part of a split to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Vertical,
    Horizontal,
    Full,
}

/// Orthogonal splitting `TM = V ⊕ H` at one point.
#[derive(Debug, Clone)]
pub struct DistributionSplit {
    metric: DMatrix<f64>,
    vertical: FrameField,
    horizontal: FrameField,
    seeds: Vec<usize>,
}

fn null_scale(g: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    NULL_TOL * g.amax().max(1e-300) * v.norm_squared()
}

fn residual(g: &DMatrix<f64>, frame: &FrameField, v: &DVector<f64>) -> DVector<f64> {
    let mut r = v.clone();
    for (e, s) in frame.vectors.iter().zip(&frame.signs) {
        r -= e * (s * inner(g, v, e));
    }
    r
}

fn push_normalized(g: &DMatrix<f64>, frame: &mut FrameField, r: DVector<f64>) {
    let n2 = inner(g, &r, &r);
    frame.vectors.push(&r / n2.abs().sqrt());
    frame.signs.push(n2.signum());
}

impl DistributionSplit {
    /// Split with V spanned by `vertical_span`; H seeded from coordinate
    /// vectors by largest-residual pivoting, ties to the lower index.
    pub fn new(g: &DMatrix<f64>, vertical_span: &[DVector<f64>]) -> Result<Self> {
        Self::build(g, vertical_span, None)
    }

    /// Same construction reusing a previously chosen seed order, so that the
    /// frame varies smoothly between nearby points.
    pub fn with_seeds(g: &DMatrix<f64>, vertical_span: &[DVector<f64>], seeds: &[usize]) -> Result<Self> {
        Self::build(g, vertical_span, Some(seeds))
    }

    fn build(g: &DMatrix<f64>, vertical_span: &[DVector<f64>], seeds: Option<&[usize]>) -> Result<Self> {
        let m = g.nrows();
        if vertical_span.len() > m {
            return Err(Error::Dimension(format!("{} vertical vectors in dimension {m}", vertical_span.len())));
        }
        let mut order: Vec<usize> = (0..vertical_span.len()).collect();
        let causal = |v: &DVector<f64>| inner(g, v, v) / v.norm_squared().max(1e-300);
        order.sort_by(|&i, &j| {
            causal(&vertical_span[i])
                .partial_cmp(&causal(&vertical_span[j]))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut vertical = FrameField {
            vectors: Vec::new(),
            signs: Vec::new(),
        };
        for &i in &order {
            let v = &vertical_span[i];
            if v.len() != m {
                return Err(Error::Dimension(format!("vertical vector of length {} in dimension {m}", v.len())));
            }
            let r = residual(g, &vertical, v);
            let n2 = inner(g, &r, &r);
            if !(n2.abs() > null_scale(g, v)) {
                return Err(Error::CausalDegeneracy(format!(
                    "vertical distribution is degenerate (g(v,v) = {n2:.3e})"
                )));
            }
            push_normalized(g, &mut vertical, r);
        }

        let mut frame = vertical.clone();
        let mut horizontal = FrameField {
            vectors: Vec::new(),
            signs: Vec::new(),
        };
        let basis = |j: usize| {
            let mut e = DVector::zeros(m);
            e[j] = 1.0;
            e
        };
        let mut used = Vec::new();
        match seeds {
            Some(seeds) => {
                if seeds.len() != m - vertical.len() {
                    return Err(Error::Dimension("seed order length mismatch".into()));
                }
                for &j in seeds {
                    let e = basis(j);
                    let r = residual(g, &frame, &e);
                    let n2 = inner(g, &r, &r);
                    if !(n2.abs() > null_scale(g, &e)) {
                        return Err(Error::CausalDegeneracy("horizontal frame degenerate at reused seed".into()));
                    }
                    push_normalized(g, &mut frame, r.clone());
                    push_normalized(g, &mut horizontal, r);
                    used.push(j);
                }
            }
            None => {
                while horizontal.len() < m - vertical.len() {
                    let mut best: Option<(usize, f64, DVector<f64>)> = None;
                    for j in (0..m).filter(|j| !used.contains(j)) {
                        let r = residual(g, &frame, &basis(j));
                        let n2 = inner(g, &r, &r).abs();
                        let better = match &best {
                            None => true,
                            Some((_, b, _)) => n2 > *b * (1.0 + 1e-12),
                        };
                        if better {
                            best = Some((j, n2, r));
                        }
                    }
                    let (j, n2, r) = best.expect("a seed remains");
                    if !(n2 > null_scale(g, &basis(j))) {
                        return Err(Error::CausalDegeneracy("horizontal distribution is degenerate".into()));
                    }
                    push_normalized(g, &mut frame, r.clone());
                    push_normalized(g, &mut horizontal, r);
                    used.push(j);
                }
            }
        }
        Ok(DistributionSplit {
            metric: g.clone(),
            vertical,
            horizontal,
            seeds: used,
        })
    }

    pub fn rank(&self) -> usize {
        self.vertical.len()
    }

    pub fn vertical(&self) -> &FrameField {
        &self.vertical
    }

    pub fn horizontal(&self) -> &FrameField {
        &self.horizontal
    }

    pub fn seeds(&self) -> &[usize] {
        &self.seeds
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    /// Full frame, vertical vectors first.
    pub fn frame(&self) -> FrameField {
        let mut f = self.vertical.clone();
        f.vectors.extend(self.horizontal.vectors.iter().cloned());
        f.signs.extend(self.horizontal.signs.iter().cloned());
        f
    }

    /// `P_V = Σ ε_i e_i (g e_i)ᵀ`.
    pub fn vertical_projector(&self) -> DMatrix<f64> {
        let m = self.metric.nrows();
        let mut p = DMatrix::zeros(m, m);
        for (e, s) in self.vertical.vectors.iter().zip(&self.vertical.signs) {
            p += (e * (&self.metric * e).transpose()) * *s;
        }
        p
    }

    pub fn horizontal_projector(&self) -> DMatrix<f64> {
        let m = self.metric.nrows();
        DMatrix::identity(m, m) - self.vertical_projector()
    }

    pub fn project(&self, v: &DVector<f64>, part: Part) -> DVector<f64> {
        match part {
            Part::Vertical => self.vertical_projector() * v,
            Part::Horizontal => self.horizontal_projector() * v,
            Part::Full => v.clone(),
        }
    }

    /// Coordinate components of the (0,2) tensor `g^V(X,Y) = g(P_V X, P_V Y)`,
    /// negated so the result is positive on a timelike V.
    pub fn vertical_metric(&self) -> DMatrix<f64> {
        let pv = self.vertical_projector();
        -(pv.transpose() * &self.metric * pv)
    }

    pub fn horizontal_metric(&self) -> DMatrix<f64> {
        let ph = self.horizontal_projector();
        ph.transpose() * &self.metric * ph
    }
}

/// A vertical distribution over the chart, given by spanning vector fields.
#[derive(Clone)]
pub struct DistributionField {
    span: Field<Vec<DVector<f64>>>,
}

impl DistributionField {
    pub fn new(span: Field<Vec<DVector<f64>>>) -> Self {
        DistributionField { span }
    }

    pub fn from_vector(u: &VectorField) -> Self {
        DistributionField {
            span: u.map(|v| Ok(vec![v])),
        }
    }

    pub fn depth(&self) -> u8 {
        self.span.depth()
    }

    pub fn split_at(&self, metric: &MetricField, x: &[f64]) -> Result<DistributionSplit> {
        DistributionSplit::new(&metric.at(x)?, &self.span.eval(x)?)
    }

    fn frame_field(&self, metric: &MetricField, seeds: Vec<usize>) -> Field<DMatrix<f64>> {
        let span = self.span.clone();
        let metric_c = metric.clone();
        let depth = self.depth().max(metric.components().depth());
        Field::new(move |y| {
            let split = DistributionSplit::with_seeds(&metric_c.at(y)?, &span.eval(y)?, &seeds)?;
            Ok(split.frame().matrix())
        })
        .with_depth(depth)
    }
}

/// Gradient of `f` projected onto V, H, or unprojected.
pub fn projected_gradient(
    metric: &MetricField,
    split: &DistributionSplit,
    f: &ScalarField,
    x: &[f64],
    part: Part,
) -> Result<DVector<f64>> {
    let grad = super::connection::gradient(metric, f, x)?;
    Ok(split.project(&grad, part))
}

/// Mean curvature of V (`which = Vertical`) or H (`which = Horizontal`) by
/// the frame formula `(1/q) Σ ε_i (∇_{e_i} e_i)^⊥`.
pub fn mean_curvature(metric: &MetricField, distribution: &DistributionField, x: &[f64], which: Part) -> Result<DVector<f64>> {
    metric.chart().require(x)?;
    let split = distribution.split_at(metric, x)?;
    let q = split.rank();
    let m = metric.dimension();
    let frames = distribution.frame_field(metric, split.seeds().to_vec());
    let e0 = frames.eval(x)?;
    let gamma = christoffel_unchecked(metric, x)?;
    let cols = super::field::partials(&frames, metric.chart(), x, metric.fd_policy())?;
    let signs = split.frame().signs;
    let (range, target) = match which {
        Part::Vertical => (0..q, Part::Horizontal),
        Part::Horizontal => (q..m, Part::Vertical),
        Part::Full => {
            return Err(Error::Precondition("mean curvature needs the V or H distribution".into()));
        }
    };
    let count = range.len();
    if count == 0 {
        return Ok(DVector::zeros(m));
    }
    let mut acc = DVector::zeros(m);
    for i in range {
        let e = e0.column(i).into_owned();
        let mut de = DVector::zeros(m);
        for (b, col) in cols.iter().enumerate() {
            de += col.column(i) * e[b];
        }
        let nabla = de + gamma.contract(&e, &e);
        acc += split.project(&nabla, target) * signs[i];
    }
    Ok(acc / count as f64)
}

/// Closed forms for a unit timelike `U` spanning V:
/// `μ^V = −∇_U U`, `μ^H = (div U / (m−1)) U`.
pub fn mean_curvature_closed_form(metric: &MetricField, u: &VectorField, x: &[f64], which: Part) -> Result<DVector<f64>> {
    match which {
        Part::Vertical => Ok(-covariant_derivative(metric, u, u, x)?),
        Part::Horizontal => {
            let m = metric.dimension() as f64;
            Ok(u.eval(x)? * (divergence(metric, u, x)? / (m - 1.0)))
        }
        Part::Full => Err(Error::Precondition("mean curvature needs the V or H distribution".into())),
    }
}

/// Positive-definite norm adapted to a unit timelike `u`:
/// `|v|² = g(v,u)² + g(P_H v, P_H v)`.
pub fn adapted_norm(g: &DMatrix<f64>, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let a = inner(g, v, u);
    let h = v + u * a;
    (a * a + inner(g, &h, &h).max(0.0)).sqrt()
}

/// Adapted norm of a 1-form, via its metric dual.
pub fn adapted_form_norm(g: &DMatrix<f64>, g_inv: &DMatrix<f64>, u: &DVector<f64>, form: &DVector<f64>) -> f64 {
    adapted_norm(g, u, &(g_inv * form))
}

/// Frobenius norm of a (0,2) tensor in a g-orthonormal frame.
pub fn frame_norm_02(frame: &FrameField, t: &DMatrix<f64>) -> f64 {
    let e = frame.matrix();
    (e.transpose() * t * e).norm()
}

/// FD Jacobian of a vector field, re-exported for ops that need raw partials.
pub fn jacobian(metric: &MetricField, v: &VectorField, x: &[f64]) -> Result<DMatrix<f64>> {
    vector_jacobian(v, metric.chart(), x, metric.fd_policy())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::chart::ChartDomain;
    use crate::geometry::metric::{minkowski, Signature};

    #[test]
    fn split_projectors_are_complementary() {
        let g = minkowski(4, 0);
        let u = DVector::from_vec(vec![2.0_f64.sqrt(), 1.0, 0.0, 0.0]);
        let s = DistributionSplit::new(&g, std::slice::from_ref(&u)).unwrap();
        let pv = s.vertical_projector();
        let ph = s.horizontal_projector();
        assert!((&pv * &pv - &pv).amax() < 1e-12);
        assert!((&ph * &ph - &ph).amax() < 1e-12);
        assert!((pv.transpose() * &g * &ph).amax() < 1e-12);
        assert!(s.frame().orthonormality_defect(&g) < 1e-12);
        assert_eq!(s.vertical().signs, vec![-1.0]);
    }

    #[test]
    fn lightlike_vertical_is_rejected() {
        let g = minkowski(4, 0);
        let k = DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]);
        assert!(matches!(DistributionSplit::new(&g, &[k]), Err(Error::CausalDegeneracy(_))));
    }

    #[test]
    fn seed_pivot_prefers_lower_index_on_ties() {
        let g = minkowski(4, 0);
        let u = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let s = DistributionSplit::new(&g, &[u]).unwrap();
        assert_eq!(s.seeds(), &[1, 2, 3]);
    }

    #[test]
    fn static_slicing_has_no_mean_curvature() {
        let chart = ChartDomain::new(&["t", "x", "y", "z"]).unwrap().with_time(0);
        let g = MetricField::new(chart, Field::new(|_| Ok(minkowski(4, 0))), Signature::lorentzian(4)).unwrap();
        let u: VectorField = Field::constant_vector(DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]));
        let d = DistributionField::from_vector(&u);
        let x = [0.0, 1.0, 2.0, 3.0];
        assert!(mean_curvature(&g, &d, &x, Part::Vertical).unwrap().amax() < 1e-12);
        assert!(mean_curvature(&g, &d, &x, Part::Horizontal).unwrap().amax() < 1e-12);
    }
}
