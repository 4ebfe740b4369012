//! Differential of a submersion, the Cauchy-Green endomorphism and its
//! Lorentzian eigenstructure.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::field::{partials, FdPolicy, Field, ScalarField, TensorField, VectorField};
use crate::geometry::frame::{DistributionSplit, FrameField};
use crate::geometry::metric::{inner, invert, DerivativeMode, MetricField};
use crate::geometry::ChartDomain;

/// A map between charts with value and (optionally analytic) Jacobian.
#[derive(Clone)]
pub struct SmoothMap {
    domain: ChartDomain,
    codomain: ChartDomain,
    value: VectorField,
    jacobian: Option<TensorField>,
    mode: DerivativeMode,
    fd: FdPolicy,
}

impl SmoothMap {
    pub fn new(domain: ChartDomain, codomain: ChartDomain, value: VectorField) -> Self {
        SmoothMap {
            domain,
            codomain,
            value,
            jacobian: None,
            mode: DerivativeMode::FiniteDifference,
            fd: FdPolicy::default(),
        }
    }

    /// Analytic Jacobian, an `n×m` matrix field.
    pub fn with_jacobian(mut self, jacobian: TensorField) -> Self {
        self.jacobian = Some(jacobian);
        self.mode = DerivativeMode::Analytic;
        self
    }

    pub fn force_fd(mut self) -> Self {
        self.mode = DerivativeMode::FiniteDifference;
        self
    }

    pub fn with_fd_policy(mut self, fd: FdPolicy) -> Self {
        self.fd = fd;
        self
    }

    pub fn domain(&self) -> &ChartDomain {
        &self.domain
    }

    pub fn codomain(&self) -> &ChartDomain {
        &self.codomain
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn value_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        let y = self.value.eval(x)?;
        if y.len() != self.codomain.dimension() {
            return Err(Error::Dimension(format!(
                "map returned {} components, codomain has dimension {}",
                y.len(),
                self.codomain.dimension()
            )));
        }
        Ok(y)
    }

    pub fn fd_jacobian_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let cols = partials(&self.value, &self.domain, x, &self.fd)?;
        let n = self.codomain.dimension();
        Ok(DMatrix::from_fn(n, cols.len(), |a, b| cols[b][a]))
    }

    pub fn jacobian_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        match (&self.jacobian, self.mode) {
            (Some(j), DerivativeMode::Analytic) => {
                let j = j.eval(x)?;
                if j.nrows() != self.codomain.dimension() || j.ncols() != self.domain.dimension() {
                    return Err(Error::Dimension("analytic jacobian has the wrong shape".into()));
                }
                Ok(j)
            }
            _ => self.fd_jacobian_at(x),
        }
    }

    /// FD depth of quantities built from the Jacobian.
    pub fn jacobian_depth(&self) -> u8 {
        match (&self.jacobian, self.mode) {
            (Some(j), DerivativeMode::Analytic) => j.depth(),
            _ => self.value.depth() + 1,
        }
    }

    /// Max entry-wise gap between analytic and FD Jacobians (0 without an analytic one).
    pub fn jacobian_consistency(&self, x: &[f64]) -> Result<f64> {
        match &self.jacobian {
            Some(j) => Ok((j.eval(x)? - self.fd_jacobian_at(x)?).amax()),
            None => Ok(0.0),
        }
    }
}

fn target_metric_at(map: &SmoothMap, h: &MetricField, x: &[f64]) -> Result<DMatrix<f64>> {
    let y = map.value_at(x)?;
    if !h.chart().admits_stencil(y.as_slice()) {
        return Err(Error::OutsideChart {
            point: y.as_slice().to_vec(),
            margin: h.chart().margin(y.as_slice()),
        });
    }
    h.at(y.as_slice())
}

fn numeric_rank(j: &DMatrix<f64>) -> usize {
    let sv = j.clone().svd(false, false).singular_values;
    let top = sv.amax();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > 1e-10 * top).count()
}

/// `(φ*h)_{ab} = h(dφ ∂_a, dφ ∂_b)`.
pub fn pullback_metric(map: &SmoothMap, h: &MetricField, x: &[f64]) -> Result<DMatrix<f64>> {
    let j = map.jacobian_at(x)?;
    let n = map.codomain().dimension();
    let rank = numeric_rank(&j);
    if rank < n {
        return Err(Error::RankDeficient { expected: n, found: rank });
    }
    let hy = target_metric_at(map, h, x)?;
    Ok(pullback_from_parts(&j, &hy))
}

pub fn pullback_from_parts(j: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let p = j.transpose() * h * j;
    (&p + p.transpose()) * 0.5
}

/// `Fᵗ = g⁻¹ Fᵀ h`, so that `h(Fv, w) = g(v, Fᵗ w)`.
pub fn pseudo_adjoint(jacobian: &DMatrix<f64>, g: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let g_inv = invert(g, &[])?;
    Ok(g_inv * jacobian.transpose() * h)
}

/// Null vector of an `n×m` matrix of rank `m−1`, by Gauss-Jordan elimination
/// with full pivoting.
pub fn kernel_vector(j: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (rows, cols) = j.shape();
    let mut a = j.clone();
    let mut perm: Vec<usize> = (0..cols).collect();
    let scale = a.amax();
    if scale == 0.0 {
        return Err(Error::RankDeficient {
            expected: cols - 1,
            found: 0,
        });
    }
    let mut rank = 0;
    for k in 0..rows.min(cols) {
        let mut best = (k, k, 0.0);
        for i in k..rows {
            for c in k..cols {
                let v = a[(i, c)].abs();
                if v > best.2 {
                    best = (i, c, v);
                }
            }
        }
        if best.2 <= 1e-10 * scale {
            break;
        }
        a.swap_rows(k, best.0);
        a.swap_columns(k, best.1);
        perm.swap(k, best.1);
        let pivot = a[(k, k)];
        for c in 0..cols {
            a[(k, c)] /= pivot;
        }
        for i in 0..rows {
            if i != k {
                let f = a[(i, k)];
                if f != 0.0 {
                    for c in 0..cols {
                        a[(i, c)] -= f * a[(k, c)];
                    }
                }
            }
        }
        rank += 1;
    }
    if rank != cols - 1 {
        return Err(Error::RankDeficient {
            expected: cols - 1,
            found: rank,
        });
    }
    let mut permuted = DVector::zeros(cols);
    permuted[rank] = 1.0;
    for i in 0..rank {
        permuted[i] = -a[(i, rank)];
    }
    let mut v = DVector::zeros(cols);
    for (slot, &orig) in perm.iter().enumerate() {
        v[orig] = permuted[slot];
    }
    Ok(v)
}

/// Eigenstructure of the Cauchy-Green endomorphism at one point.
#[derive(Debug, Clone, Serialize)]
pub struct CauchyGreenDecomposition {
    /// `C = g⁻¹ φ*h` acting on coordinate vectors.
    #[serde(serialize_with = "ser_matrix")]
    pub endomorphism: DMatrix<f64>,
    /// `Λ₁ ≥ Λ₂ ≥ Λ₃ > 0`.
    pub eigenvalues: Vec<f64>,
    #[serde(serialize_with = "ser_vectors")]
    pub eigenvectors: Vec<DVector<f64>>,
    #[serde(serialize_with = "ser_vector")]
    pub u: DVector<f64>,
    #[serde(skip)]
    pub metric: DMatrix<f64>,
    #[serde(skip)]
    pub pullback: DMatrix<f64>,
    #[serde(skip)]
    pub jacobian: DMatrix<f64>,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect();
    rows.serialize(s)
}

fn ser_vector<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    v.as_slice().serialize(s)
}

fn ser_vectors<S: serde::Serializer>(v: &[DVector<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<&[f64]> = v.iter().map(|x| x.as_slice()).collect();
    rows.serialize(s)
}

impl CauchyGreenDecomposition {
    pub fn lambda(&self, i: usize) -> f64 {
        self.eigenvalues[i].sqrt()
    }

    /// `n = λ₁λ₂λ₃ = √σ₃`.
    pub fn n(&self) -> f64 {
        sigma_elementary(self, self.eigenvalues.len()).sqrt()
    }

    pub fn horizontal_frame(&self) -> FrameField {
        FrameField {
            signs: vec![1.0; self.eigenvectors.len()],
            vectors: self.eigenvectors.clone(),
        }
    }

    /// `ω = U^♭`.
    pub fn omega(&self) -> DVector<f64> {
        &self.metric * &self.u
    }

    /// `g^V = ω ⊗ ω`.
    pub fn vertical_metric(&self) -> DMatrix<f64> {
        let w = self.omega();
        &w * w.transpose()
    }

    /// `g^H = g + ω ⊗ ω`.
    pub fn horizontal_metric(&self) -> DMatrix<f64> {
        &self.metric + self.vertical_metric()
    }

    /// `‖C − Σ Λᵢ Xᵢ ⊗ Xᵢ^♭‖_max`.
    pub fn spectral_residual(&self) -> f64 {
        let mut r = self.endomorphism.clone();
        for (l, x) in self.eigenvalues.iter().zip(&self.eigenvectors) {
            r -= x * (&self.metric * x).transpose() * *l;
        }
        r.amax()
    }
}

/// Decompose the Cauchy-Green endomorphism of `map` at `x`: timelike kernel
/// first, then the symmetric horizontal eigenproblem.
pub fn cauchy_green_decompose(map: &SmoothMap, g: &MetricField, h: &MetricField, x: &[f64]) -> Result<CauchyGreenDecomposition> {
    g.chart().require(x)?;
    let gx = g.at(x)?;
    let j = map.jacobian_at(x)?;
    let hy = target_metric_at(map, h, x)?;
    decompose_parts(&j, &gx, &hy, g.chart().time_index().unwrap_or(0))
}

/// Decomposition from the Jacobian and metric matrices at a point.
pub fn decompose_parts(j: &DMatrix<f64>, g: &DMatrix<f64>, h: &DMatrix<f64>, time_index: usize) -> Result<CauchyGreenDecomposition> {
    let m = g.nrows();
    if j.ncols() != m || j.nrows() != h.nrows() {
        return Err(Error::Dimension("jacobian shape does not match metrics".into()));
    }
    if j.nrows() + 1 != m {
        return Err(Error::Dimension(format!(
            "submersion needs codomain dimension m−1, got {} for m = {m}",
            j.nrows()
        )));
    }
    let v = kernel_vector(j)?;
    let gvv = inner(g, &v, &v);
    let scale = 1e-10 * g.amax() * v.norm_squared();
    if gvv.abs() <= scale {
        return Err(Error::CausalDegeneracy("kernel of the differential is lightlike".into()));
    }
    if gvv > 0.0 {
        return Err(Error::CausalDegeneracy("kernel of the differential is spacelike".into()));
    }
    let mut u = v / (-gvv).sqrt();
    if u[time_index] < 0.0 {
        u = -u;
    }
    let g_inv = invert(g, &[])?;
    let p = pullback_from_parts(j, h);
    let c = &g_inv * &p;

    let split = DistributionSplit::new(g, std::slice::from_ref(&u))?;
    let e = split.horizontal().matrix();
    let a = e.transpose() * &p * &e;
    let a = (&a + a.transpose()) * 0.5;
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &k| eig.eigenvalues[k].partial_cmp(&eig.eigenvalues[i]).unwrap_or(std::cmp::Ordering::Equal));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let top = eigenvalues[0].abs().max(1e-300);
    if eigenvalues[n - 1] <= 1e-14 * top {
        return Err(Error::Regime(format!(
            "non-positive horizontal eigenvalue {:.3e}",
            eigenvalues[n - 1]
        )));
    }
    let degenerate = eigenvalues.iter().all(|l| (l - eigenvalues[0]).abs() <= 1e-12 * top);
    let eigenvectors = if degenerate {
        split.horizontal().vectors.clone()
    } else {
        order.iter().map(|&i| &e * eig.eigenvectors.column(i)).collect()
    };
    Ok(CauchyGreenDecomposition {
        endomorphism: c,
        eigenvalues,
        eigenvectors,
        u,
        metric: g.clone(),
        pullback: p,
        jacobian: j.clone(),
    })
}

/// Elementary symmetric polynomial `σ_k(Λ₁, …, Λ_n)`; `σ_0 = 1`.
pub fn sigma_elementary(decomp: &CauchyGreenDecomposition, k: usize) -> f64 {
    elementary_symmetric(&decomp.eigenvalues, k)
}

pub fn elementary_symmetric(values: &[f64], k: usize) -> f64 {
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    for &v in values {
        for j in (1..=k).rev() {
            e[j] += v * e[j - 1];
        }
    }
    e[k]
}

/// The Newton tensors `χ₀ = Id, χ_q = σ_q Id − C ∘ χ_{q−1}`.
#[derive(Debug, Clone)]
pub struct NewtonTensorSet {
    pub chi: Vec<DMatrix<f64>>,
}

pub fn newton_tensors(decomp: &CauchyGreenDecomposition, max_q: usize) -> NewtonTensorSet {
    let m = decomp.endomorphism.nrows();
    let mut chi = vec![DMatrix::identity(m, m)];
    for q in 1..=max_q {
        let s = sigma_elementary(decomp, q);
        let next = DMatrix::identity(m, m) * s - &decomp.endomorphism * &chi[q - 1];
        chi.push(next);
    }
    NewtonTensorSet { chi }
}

/// Single Newton tensor `χ_q`.
pub fn newton_tensor(decomp: &CauchyGreenDecomposition, q: usize) -> DMatrix<f64> {
    newton_tensors(decomp, q).chi.pop().expect("q+1 tensors")
}

/// Result of the horizontal conformality test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conformality {
    pub conformal: bool,
    /// Geometric mean of the horizontal eigenvalues, `λ²` when conformal.
    pub dilation: f64,
    pub max_relative_gap: f64,
}

pub const DEFAULT_CONFORMALITY_TOL: f64 = 1e-6;

pub fn horizontal_conformality_check(decomp: &CauchyGreenDecomposition, tol: f64) -> Conformality {
    let l = &decomp.eigenvalues;
    let mut gap: f64 = 0.0;
    for i in 0..l.len() {
        for j in i + 1..l.len() {
            gap = gap.max((l[i] - l[j]).abs() / l[i].abs().max(l[j].abs()));
        }
    }
    let dilation = l.iter().product::<f64>().powf(1.0 / l.len() as f64);
    Conformality {
        conformal: gap < tol,
        dilation,
        max_relative_gap: gap,
    }
}

/// A sigma-model configuration: a map with domain and target metrics.
#[derive(Clone)]
pub struct SigmaModel {
    pub map: SmoothMap,
    pub g: MetricField,
    pub h: MetricField,
}

impl SigmaModel {
    pub fn new(map: SmoothMap, g: MetricField, h: MetricField) -> Result<Self> {
        if map.domain().dimension() != g.dimension() || map.codomain().dimension() != h.dimension() {
            return Err(Error::Dimension("map charts do not match the metrics".into()));
        }
        Ok(SigmaModel { map, g, h })
    }

    pub fn decompose(&self, x: &[f64]) -> Result<CauchyGreenDecomposition> {
        cauchy_green_decompose(&self.map, &self.g, &self.h, x)
    }

    /// Decomposition at a stencil point (no boundary-band check).
    pub fn decompose_unchecked(&self, x: &[f64]) -> Result<CauchyGreenDecomposition> {
        let gx = self.g.at(x)?;
        let j = self.map.jacobian_at(x)?;
        let hy = target_metric_at(&self.map, &self.h, x)?;
        decompose_parts(&j, &gx, &hy, self.g.chart().time_index().unwrap_or(0))
    }

    pub fn depth(&self) -> u8 {
        self.map.jacobian_depth().max(self.g.components().depth())
    }

    pub fn decomposition_field(&self) -> Field<CauchyGreenDecomposition> {
        let s = self.clone();
        Field::new(move |x| s.decompose_unchecked(x)).with_depth(self.depth())
    }

    pub fn u_field(&self) -> VectorField {
        self.decomposition_field().map(|d| Ok(d.u))
    }

    pub fn sigma_field(&self, k: usize) -> ScalarField {
        self.decomposition_field().map(move |d| Ok(sigma_elementary(&d, k)))
    }

    pub fn with_fd_policy(mut self, fd: FdPolicy) -> Self {
        self.map = self.map.with_fd_policy(fd);
        self.g = self.g.with_fd_policy(fd);
        self.h = self.h.with_fd_policy(fd);
        self
    }

    pub fn force_fd(mut self) -> Self {
        self.map = self.map.force_fd();
        self.g = self.g.force_fd();
        self.h = self.h.force_fd();
        self
    }
}
