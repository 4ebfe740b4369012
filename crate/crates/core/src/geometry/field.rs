use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::chart::ChartDomain;

type EvalFn<T> = Arc<dyn Fn(&[f64]) -> Result<T> + Send + Sync>;

/// A quantity defined pointwise over a chart.
///
/// `depth` counts the finite-difference levels already folded into the
/// evaluation; derivative operators widen their step for deeper fields so
/// that nested differences stay above the roundoff floor.
pub struct Field<T> {
    eval: EvalFn<T>,
    depth: u8,
}

impl<T> Clone for Field<T> {
    fn clone(&self) -> Self {
        Field {
            eval: self.eval.clone(),
            depth: self.depth,
        }
    }
}

impl<T: 'static> Field<T> {
    pub fn new(f: impl Fn(&[f64]) -> Result<T> + Send + Sync + 'static) -> Self {
        Field {
            eval: Arc::new(f),
            depth: 0,
        }
    }

    pub fn with_depth(mut self, depth: u8) -> Self {
        self.depth = depth;
        self
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn eval(&self, x: &[f64]) -> Result<T> {
        (self.eval)(x)
    }

    pub fn map<U: 'static>(&self, f: impl Fn(T) -> Result<U> + Send + Sync + 'static) -> Field<U> {
        let inner = self.eval.clone();
        Field {
            eval: Arc::new(move |x| f(inner(x)?)),
            depth: self.depth,
        }
    }
}

impl Field<f64> {
    pub fn constant(value: f64) -> Self {
        Field::new(move |_| Ok(value))
    }
}

impl Field<DVector<f64>> {
    pub fn constant_vector(v: DVector<f64>) -> Self {
        Field::new(move |_| Ok(v.clone()))
    }
}

pub type ScalarField = Field<f64>;
pub type VectorField = Field<DVector<f64>>;
pub type TensorField = Field<DMatrix<f64>>;

/// Values that can be central-differenced.
pub trait FdValue: Sized {
    fn central(plus: &Self, minus: &Self, h: f64) -> Self;
    /// Fourth-order stencil from `f(x±h)` and `f(x±2h)`.
    fn five_point(plus2: &Self, plus: &Self, minus: &Self, minus2: &Self, h: f64) -> Self;
}

macro_rules! fd_value {
    ($t:ty) => {
        impl FdValue for $t {
            fn central(plus: &Self, minus: &Self, h: f64) -> Self {
                (plus - minus) / (2.0 * h)
            }

            fn five_point(plus2: &Self, plus: &Self, minus: &Self, minus2: &Self, h: f64) -> Self {
                ((plus - minus) * 8.0 - (plus2 - minus2)) / (12.0 * h)
            }
        }
    };
}

fd_value!(f64);
fd_value!(DVector<f64>);
fd_value!(DMatrix<f64>);

/// Step policy for central differences.
///
/// The base step is `cbrt(eps)` scaled by `max(1, |x_i|)`. Fields that
/// already contain one finite-difference level use `base^(2/3)`, the optimum
/// when the differenced values carry `O(base^2)` error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdPolicy {
    base: f64,
}

impl Default for FdPolicy {
    fn default() -> Self {
        FdPolicy {
            base: f64::EPSILON.cbrt(),
        }
    }
}

impl FdPolicy {
    pub fn with_base(base: f64) -> Result<Self> {
        if !(base > 0.0 && base < 0.1) {
            return Err(Error::Domain(format!("finite-difference step {base} out of range (0, 0.1)")));
        }
        Ok(FdPolicy { base })
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn relative_step(&self, depth: u8) -> f64 {
        let mut h = self.base;
        for _ in 0..depth {
            h = h.powf(2.0 / 3.0);
        }
        h
    }

    pub fn step(&self, depth: u8, coordinate: f64) -> f64 {
        self.relative_step(depth) * coordinate.abs().max(1.0)
    }
}

/// Coordinate partial derivatives `[∂_0 F, …, ∂_{m-1} F]` at `x`.
///
/// Fields that already contain a difference level are differenced with the
/// fourth-order stencil, which keeps nested truncation error below the
/// rounding floor at the wider nested step.
pub fn partials<T: FdValue + 'static>(
    field: &Field<T>,
    chart: &ChartDomain,
    x: &[f64],
    policy: &FdPolicy,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(x.len());
    let mut y = x.to_vec();
    let nested = field.depth() > 0;
    let at = |y: &mut Vec<f64>, i: usize, offset: f64| -> Result<T> {
        y[i] = x[i] + offset;
        if !chart.admits_stencil(y) {
            return Err(Error::StencilOutsideChart { point: y.clone() });
        }
        let v = field.eval(y);
        y[i] = x[i];
        v
    };
    for i in 0..x.len() {
        let h = policy.step(field.depth(), x[i]);
        let plus = at(&mut y, i, h)?;
        let minus = at(&mut y, i, -h)?;
        if nested {
            let plus2 = at(&mut y, i, 2.0 * h)?;
            let minus2 = at(&mut y, i, -2.0 * h)?;
            out.push(T::five_point(&plus2, &plus, &minus, &minus2, h));
        } else {
            out.push(T::central(&plus, &minus, h));
        }
    }
    Ok(out)
}

/// Derivative of a scalar field along `direction` at `x`.
pub fn directional(
    field: &ScalarField,
    chart: &ChartDomain,
    x: &[f64],
    direction: &DVector<f64>,
    policy: &FdPolicy,
) -> Result<f64> {
    let d = partials(field, chart, x, policy)?;
    Ok(d.iter().zip(direction.iter()).map(|(a, b)| a * b).sum())
}

/// Jacobian `∂_b V^a` of a vector field as a matrix (row a, column b).
pub fn vector_jacobian(
    field: &VectorField,
    chart: &ChartDomain,
    x: &[f64],
    policy: &FdPolicy,
) -> Result<DMatrix<f64>> {
    let cols = partials(field, chart, x, policy)?;
    let rows = cols.first().map(|c| c.len()).unwrap_or(0);
    Ok(DMatrix::from_fn(rows, cols.len(), |a, b| cols[b][a]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_step_is_wider() {
        let p = FdPolicy::default();
        assert!((p.relative_step(0) - 6.055454e-6).abs() < 1e-11);
        assert!(p.relative_step(1) > 3e-4 && p.relative_step(1) < 4e-4);
        assert_eq!(p.step(0, 10.0), 10.0 * p.relative_step(0));
    }

    #[test]
    fn partials_of_polynomial() {
        let chart = ChartDomain::new(&["x", "y"]).unwrap();
        let f: ScalarField = Field::new(|x| Ok(x[0] * x[0] * x[1] + x[1].powi(3)));
        let d = partials(&f, &chart, &[1.5, -2.0], &FdPolicy::default()).unwrap();
        assert!((d[0] - 2.0 * 1.5 * -2.0).abs() < 1e-9);
        assert!((d[1] - (1.5 * 1.5 + 3.0 * 4.0)).abs() < 1e-9);
    }

    #[test]
    fn rejects_out_of_range_step() {
        assert!(FdPolicy::with_base(0.0).is_err());
        assert!(FdPolicy::with_base(0.5).is_err());
        assert!(FdPolicy::with_base(1e-5).is_ok());
    }
}
