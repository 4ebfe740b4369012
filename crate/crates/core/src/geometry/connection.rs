use nalgebra::{DMatrix, DVector};

use crate::error::Result;

use super::field::{partials, vector_jacobian, ScalarField, TensorField, VectorField};
use super::metric::{invert, MetricField};

/// Levi-Civita symbols `Γ^a_{bc}` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Christoffel {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.dim + b) * self.dim + c]
    }

    #[inline]
    fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.dim + b) * self.dim + c] = v;
    }

    /// `Γ^a_{bc} u^b v^c`.
    pub fn contract(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let m = self.dim;
        DVector::from_fn(m, |a, _| {
            let mut s = 0.0;
            for b in 0..m {
                for c in 0..m {
                    s += self.get(a, b, c) * u[b] * v[c];
                }
            }
            s
        })
    }

    /// Flattened components, index order (a, b, c).
    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.data)
    }

    pub fn from_vector(dim: usize, v: &DVector<f64>) -> Self {
        Christoffel {
            dim,
            data: v.as_slice().to_vec(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Symbols from the metric, its inverse and its coordinate partials.
pub fn christoffel_from_parts(g_inv: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Christoffel {
    let m = g_inv.nrows();
    let mut out = Christoffel::zeros(m);
    for b in 0..m {
        for c in b..m {
            // lowered symbol Γ_{d bc}
            let lower: Vec<f64> = (0..m)
                .map(|d| 0.5 * (dg[b][(d, c)] + dg[c][(d, b)] - dg[d][(b, c)]))
                .collect();
            for a in 0..m {
                let v: f64 = (0..m).map(|d| g_inv[(a, d)] * lower[d]).sum();
                out.set(a, b, c, v);
                out.set(a, c, b, v);
            }
        }
    }
    out
}

/// Levi-Civita connection coefficients at `x`.
pub fn christoffel(metric: &MetricField, x: &[f64]) -> Result<Christoffel> {
    metric.chart().require(x)?;
    christoffel_unchecked(metric, x)
}

/// As [`christoffel`] but only requires `x` to be a stencil-admissible point.
pub fn christoffel_unchecked(metric: &MetricField, x: &[f64]) -> Result<Christoffel> {
    let g = metric.at(x)?;
    let g_inv = invert(&g, x)?;
    let dg = metric.partials_at(x)?;
    Ok(christoffel_from_parts(&g_inv, &dg))
}

/// Christoffel symbols as a (flattened) field, for curvature by differencing.
pub fn christoffel_field(metric: &MetricField) -> VectorField {
    let m = metric.clone();
    VectorField::new(move |x| Ok(christoffel_unchecked(&m, x)?.as_vector())).with_depth(metric.connection_depth())
}

/// `(∇_X Y)(x)`.
pub fn covariant_derivative(metric: &MetricField, x_field: &VectorField, y_field: &VectorField, x: &[f64]) -> Result<DVector<f64>> {
    metric.chart().require(x)?;
    let gamma = christoffel_unchecked(metric, x)?;
    let xv = x_field.eval(x)?;
    let yv = y_field.eval(x)?;
    let dy = vector_jacobian(y_field, metric.chart(), x, metric.fd_policy())?;
    Ok(&dy * &xv + gamma.contract(&xv, &yv))
}

/// Covariant Jacobian `(∇Y)^a_b = ∂_b Y^a + Γ^a_{bc} Y^c`.
pub fn covariant_jacobian(metric: &MetricField, y_field: &VectorField, x: &[f64]) -> Result<DMatrix<f64>> {
    let gamma = christoffel_unchecked(metric, x)?;
    let yv = y_field.eval(x)?;
    let dy = vector_jacobian(y_field, metric.chart(), x, metric.fd_policy())?;
    let m = metric.dimension();
    Ok(DMatrix::from_fn(m, m, |a, b| {
        dy[(a, b)] + (0..m).map(|c| gamma.get(a, b, c) * yv[c]).sum::<f64>()
    }))
}

/// `div X = ∂_a X^a + Γ^a_{ab} X^b`.
pub fn divergence(metric: &MetricField, x_field: &VectorField, x: &[f64]) -> Result<f64> {
    metric.chart().require(x)?;
    Ok(covariant_jacobian(metric, x_field, x)?.trace())
}

/// `grad f = g^{-1} df`.
pub fn gradient(metric: &MetricField, f: &ScalarField, x: &[f64]) -> Result<DVector<f64>> {
    metric.chart().require(x)?;
    let df = DVector::from_vec(partials(f, metric.chart(), x, metric.fd_policy())?);
    Ok(metric.inverse_at(x)? * df)
}

/// Divergence of a symmetric (0,2) field as a 1-form:
/// `(div S)_b = g^{ac} ∇_c S_{ab}`.
pub fn divergence_02(metric: &MetricField, s_field: &TensorField, x: &[f64]) -> Result<DVector<f64>> {
    let m = metric.dimension();
    let g_inv = metric.inverse_at(x)?;
    let gamma = christoffel_unchecked(metric, x)?;
    let s = s_field.eval(x)?;
    let ds = partials(s_field, metric.chart(), x, metric.fd_policy())?;
    let mut out = DVector::zeros(m);
    for b in 0..m {
        let mut acc = 0.0;
        for a in 0..m {
            for c in 0..m {
                let gac = g_inv[(a, c)];
                if gac == 0.0 {
                    continue;
                }
                let mut nabla = ds[c][(a, b)];
                for d in 0..m {
                    nabla -= gamma.get(d, c, a) * s[(d, b)] + gamma.get(d, c, b) * s[(a, d)];
                }
                acc += gac * nabla;
            }
        }
        out[b] = acc;
    }
    Ok(out)
}

/// Coordinate Lie derivative of a (0,2) field:
/// `(L_U T)_{ab} = U^c ∂_c T_{ab} + T_{cb} ∂_a U^c + T_{ac} ∂_b U^c`.
pub fn lie_derivative_02(metric: &MetricField, u_field: &VectorField, t_field: &TensorField, x: &[f64]) -> Result<DMatrix<f64>> {
    let m = metric.dimension();
    let u = u_field.eval(x)?;
    let t = t_field.eval(x)?;
    let dt = partials(t_field, metric.chart(), x, metric.fd_policy())?;
    let du = vector_jacobian(u_field, metric.chart(), x, metric.fd_policy())?;
    Ok(DMatrix::from_fn(m, m, |a, b| {
        let mut v = 0.0;
        for c in 0..m {
            v += u[c] * dt[c][(a, b)] + t[(c, b)] * du[(c, a)] + t[(a, c)] * du[(c, b)];
        }
        v
    }))
}

/// Exterior derivative of a 1-form field: `(dϑ)_{ab} = ∂_a ϑ_b − ∂_b ϑ_a`.
pub fn exterior_derivative(metric: &MetricField, form: &VectorField, x: &[f64]) -> Result<DMatrix<f64>> {
    let d = vector_jacobian(form, metric.chart(), x, metric.fd_policy())?;
    Ok(&d.transpose() - &d)
}
