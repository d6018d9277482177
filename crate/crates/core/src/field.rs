//! The random mixed p-spin perturbation
//! `g(z) = v Σ_p 2^{-p} x_p g_p(z)`, `g_p(z) = Σ g_{i_1..i_p} z_{i_1}..z_{i_p}`,
//! sampled either exactly on a finite support through its covariance
//! `v² ξ(z¹·z²)`, or from explicit coefficient tensors when `N^{p_max}` is small.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{LowerTriangular, SymmetricMatrix};
use crate::real::Real;
use crate::sphere::{OverlapMatrix, UnitVector};

pub const DEFAULT_P_MAX: usize = 12;
pub const MAX_P_MAX: usize = 30;
pub const DEFAULT_JITTER: f64 = 1e-10;
/// Cap on `N^{p_max}` for the explicit tensor backend.
pub const TENSOR_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Exact Gaussian vector on the support from the covariance `v² ξ(overlap)`.
    #[default]
    Covariance,
    /// Explicit i.i.d. coefficient tensors, evaluable anywhere on the sphere.
    Tensor,
    /// Linear field `v Σ_i g_i z_i` with covariance `v² overlap`.
    FirstOrder,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Covariance => "covariance",
            Backend::Tensor => "tensor",
            Backend::FirstOrder => "first_order",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "covariance" => Ok(Backend::Covariance),
            "tensor" => Ok(Backend::Tensor),
            "first_order" => Ok(Backend::FirstOrder),
            other => Err(Error::param("backend", format!("unknown backend `{other}`"))),
        }
    }
}

/// Perturbation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct FieldSpec<T> {
    pub v: T,
    #[serde(default = "default_p_max")]
    pub p_max: usize,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default = "default_jitter")]
    pub jitter: T,
}

fn default_p_max() -> usize {
    DEFAULT_P_MAX
}

fn default_backend() -> Backend {
    Backend::Covariance
}

fn default_jitter<T: Real>() -> T {
    T::lit(DEFAULT_JITTER)
}

impl<T: Real> FieldSpec<T> {
    /// Covariance backend, `p_max = 12`, jitter `1e-10`.
    pub fn new(v: T) -> Self {
        Self {
            v,
            p_max: DEFAULT_P_MAX,
            backend: Backend::Covariance,
            jitter: default_jitter(),
        }
    }

    pub fn with_p_max(mut self, p_max: usize) -> Self {
        self.p_max = p_max;
        self
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_jitter(mut self, jitter: T) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_v(mut self, v: T) -> Self {
        self.v = v;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v >= T::zero()) || !self.v.is_finite() {
            return Err(Error::param("v", "must be finite and nonnegative"));
        }
        if self.p_max == 0 || self.p_max > MAX_P_MAX {
            return Err(Error::param("p_max", format!("must lie in 1..={MAX_P_MAX}")));
        }
        if !(self.jitter >= T::zero()) || !self.jitter.is_finite() {
            return Err(Error::param("jitter", "must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Validation plus the tensor budget for dimension `dim`.
    pub fn validate_for_dim(&self, dim: usize) -> Result<()> {
        self.validate()?;
        if self.backend == Backend::Tensor {
            check_tensor_budget(dim, self.p_max)?;
        }
        Ok(())
    }

    /// Unit-strength kernel `k(s)` with covariance `v² k(overlap)`.
    pub fn kernel(&self, s: T, x: &[T]) -> Result<T> {
        match self.backend {
            Backend::FirstOrder => {
                check_overlap_range(s)?;
                Ok(s)
            }
            Backend::Covariance | Backend::Tensor => xi(s, x, self.p_max),
        }
    }

    /// `E g(z)² / v²`, without jitter.
    pub fn unit_variance(&self, x: &[T]) -> Result<T> {
        self.kernel(T::one(), x)
    }
}

fn check_tensor_budget(dim: usize, p_max: usize) -> Result<()> {
    let needed = (dim as f64).powi(p_max as i32);
    if needed > TENSOR_BUDGET as f64 {
        Err(Error::BudgetExceeded {
            needed,
            budget: TENSOR_BUDGET,
        })
    } else {
        Ok(())
    }
}

fn check_overlap_range<T: Real>(s: T) -> Result<()> {
    if s.abs() > T::one() + T::tolerance() || s.is_nan() {
        Err(Error::param("s", format!("overlap {s} outside [-1, 1]")))
    } else {
        Ok(())
    }
}

/// `p_max` i.i.d. uniform draws on `[0, 1]`.
pub fn sample_x<T: Real, R: Rng + ?Sized>(p_max: usize, rng: &mut R) -> Result<Vec<T>> {
    if p_max == 0 {
        return Err(Error::param("p_max", "must be positive"));
    }
    Ok((0..p_max).map(|_| T::uniform01(rng)).collect())
}

/// Truncated mixture `ξ(s) = Σ_{p <= p_max} 4^{-p} x_p² s^p`.
pub fn xi<T: Real>(s: T, x: &[T], p_max: usize) -> Result<T> {
    check_overlap_range(s)?;
    if x.len() < p_max {
        return Err(Error::param("x", format!("{} values for p_max = {p_max}", x.len())));
    }
    let quarter = T::lit(0.25);
    let mut weight = T::one();
    let mut power = T::one();
    let mut total = T::zero();
    for &xp in &x[..p_max] {
        weight = weight * quarter;
        power = power * s;
        total = total + weight * xp * xp * power;
    }
    Ok(total)
}

/// `C_ab = v² k(z_a · z_b)` over the support.
pub fn covariance_matrix<T: Real>(
    support: &[UnitVector<T>],
    spec: &FieldSpec<T>,
    x: &[T],
) -> Result<SymmetricMatrix<T>> {
    let overlaps = OverlapMatrix::from_points(support)?;
    Ok(unit_covariance(&overlaps, spec, x)?.scaled(spec.v * spec.v))
}

fn unit_covariance<T: Real>(
    overlaps: &OverlapMatrix<T>,
    spec: &FieldSpec<T>,
    x: &[T],
) -> Result<SymmetricMatrix<T>> {
    spec.validate()?;
    let mut failure = None;
    let m = SymmetricMatrix::from_fn(overlaps.size(), |a, b| {
        spec.kernel(overlaps.get(a, b), x).unwrap_or_else(|e| {
            failure = Some(e);
            T::nan()
        })
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(m),
    }
}

/// Exact sampler of the field on a fixed support for one draw of `x`.
///
/// The unit-strength covariance (jitter added there) is factored once; each
/// draw is `v · L ζ`. Reusing one `ζ` across several `v` gives common random
/// numbers, and the field is exactly linear in `v`.
#[derive(Clone, Debug)]
pub struct CovarianceSampler<T> {
    factor: LowerTriangular<T>,
    v: T,
    jitter: T,
}

impl<T: Real> CovarianceSampler<T> {
    pub fn new(overlaps: &OverlapMatrix<T>, spec: &FieldSpec<T>, x: &[T]) -> Result<Self> {
        if spec.backend == Backend::Tensor {
            return Err(Error::param("backend", "tensor backend has no covariance sampler"));
        }
        let cov = unit_covariance(overlaps, spec, x)?;
        let (factor, jitter) = cov.cholesky_jittered(spec.jitter)?;
        Ok(Self {
            factor,
            v: spec.v,
            jitter,
        })
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    pub fn v(&self) -> T {
        self.v
    }

    /// One draw at `v = 1`.
    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let z: Vec<T> = (0..self.factor.size()).map(|_| T::standard_normal(rng)).collect();
        self.factor.mul_vec(&z)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        scale(self.sample_unit(rng), self.v)
    }
}

pub(crate) fn scale<T: Real>(mut values: Vec<T>, v: T) -> Vec<T> {
    for value in &mut values {
        *value = *value * v;
    }
    values
}

/// One exact draw of the field on `support` (covariance or first-order backend).
pub fn sample_field_covariance<T: Real, R: Rng + ?Sized>(
    support: &[UnitVector<T>],
    spec: &FieldSpec<T>,
    x: &[T],
    rng: &mut R,
) -> Result<Vec<T>> {
    let overlaps = OverlapMatrix::from_points(support)?;
    Ok(CovarianceSampler::new(&overlaps, spec, x)?.sample(rng))
}

/// Samplers for the individual components `g_p` on a support, `p = 1..=p_max`.
///
/// `E g_p(z¹) g_p(z²) = (z¹·z²)^p` does not involve `x`, so the factors are
/// shared across all disorder draws. The components are independent and
/// `v Σ_p 2^{-p} x_p g_p` has exactly the law of the aggregated field.
#[derive(Clone, Debug)]
pub struct ComponentSampler<T> {
    factors: Vec<LowerTriangular<T>>,
    backend: Backend,
}

impl<T: Real> ComponentSampler<T> {
    pub fn new(overlaps: &OverlapMatrix<T>, spec: &FieldSpec<T>) -> Result<Self> {
        spec.validate()?;
        let orders = match spec.backend {
            Backend::FirstOrder => 1,
            _ => spec.p_max,
        };
        let factors = (1..=orders)
            .map(|p| {
                let m = SymmetricMatrix::from_fn(overlaps.size(), |a, b| {
                    overlaps.get(a, b).powi(p as i32)
                });
                m.cholesky_jittered(spec.jitter).map(|(l, _)| l)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            factors,
            backend: spec.backend,
        })
    }

    pub fn orders(&self) -> usize {
        self.factors.len()
    }

    /// `components[p-1][a] = g_p(z_a)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<T>> {
        self.factors
            .iter()
            .map(|l| {
                let z: Vec<T> = (0..l.size()).map(|_| T::standard_normal(rng)).collect();
                l.mul_vec(&z)
            })
            .collect()
    }

    /// Aggregated field from its components.
    pub fn combine(&self, components: &[Vec<T>], x: &[T], v: T) -> Vec<T> {
        combine_components(self.backend, components, x, v)
    }
}

pub(crate) fn combine_components<T: Real>(
    backend: Backend,
    components: &[Vec<T>],
    x: &[T],
    v: T,
) -> Vec<T> {
    let size = components.first().map_or(0, Vec::len);
    let mut g = vec![T::zero(); size];
    if backend == Backend::FirstOrder {
        for (slot, &c) in g.iter_mut().zip(&components[0]) {
            *slot = c;
        }
    } else {
        let mut weight = T::one();
        for (comp, &xp) in components.iter().zip(x) {
            weight = weight * T::lit(0.5);
            let coeff = weight * xp;
            for (slot, &c) in g.iter_mut().zip(comp) {
                *slot = *slot + coeff * c;
            }
        }
    }
    scale(g, v)
}

/// Explicit coefficient tensors `g_{i_1..i_p}` for `p = 1..=p_max`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTensors<T> {
    dim: usize,
    tensors: Vec<Vec<T>>,
}

impl<T: Real> CoefficientTensors<T> {
    pub fn sample<R: Rng + ?Sized>(dim: usize, p_max: usize, rng: &mut R) -> Result<Self> {
        if dim == 0 || p_max == 0 {
            return Err(Error::param("dim", "dimension and p_max must be positive"));
        }
        check_tensor_budget(dim, p_max)?;
        let tensors = (1..=p_max)
            .map(|p| (0..dim.pow(p as u32)).map(|_| T::standard_normal(rng)).collect())
            .collect();
        Ok(Self { dim, tensors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p_max(&self) -> usize {
        self.tensors.len()
    }

    /// Raw coefficients of order `p` (1-based).
    pub fn coefficients(&self, p: usize) -> &[T] {
        &self.tensors[p - 1]
    }

    /// `g_p(z) = Σ g_{i_1..i_p} z_{i_1}..z_{i_p}` by contracting one index at a time.
    pub fn component(&self, p: usize, z: &UnitVector<T>) -> Result<T> {
        if z.dim() != self.dim {
            return Err(Error::DimensionMismatch(self.dim, z.dim()));
        }
        if p == 0 || p > self.tensors.len() {
            return Err(Error::param("p", format!("order {p} not sampled")));
        }
        let coords = z.coords();
        let mut current: Vec<T> = self.tensors[p - 1].clone();
        while current.len() > 1 {
            current = current
                .chunks_exact(self.dim)
                .map(|chunk| chunk.iter().zip(coords).map(|(&a, &b)| a * b).sum())
                .collect();
        }
        Ok(current[0])
    }

    pub fn components(&self, z: &UnitVector<T>) -> Result<Vec<T>> {
        (1..=self.tensors.len()).map(|p| self.component(p, z)).collect()
    }
}

/// One draw of the disorder: the uniforms `x_p` and the field on a support.
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderRealization<T> {
    v: T,
    backend: Backend,
    x: Vec<T>,
    unit_values: Vec<T>,
    field_values: Vec<T>,
    tensors: Option<CoefficientTensors<T>>,
}

impl<T: Real> DisorderRealization<T> {
    /// Realization known only through its values on a support.
    pub fn from_unit_values(v: T, backend: Backend, x: Vec<T>, unit_values: Vec<T>) -> Result<Self> {
        if let Some(index) = unit_values.iter().position(|f| !f.is_finite()) {
            return Err(Error::NonFiniteField { index });
        }
        if x.iter().any(|&xp| !(xp >= T::zero() && xp <= T::one())) {
            return Err(Error::param("x", "uniform variables must lie in [0, 1]"));
        }
        let field_values = scale(unit_values.clone(), v);
        Ok(Self {
            v,
            backend,
            x,
            unit_values,
            field_values,
            tensors: None,
        })
    }

    pub fn v(&self) -> T {
        self.v
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn x(&self) -> &[T] {
        &self.x
    }

    pub fn field_values(&self) -> &[T] {
        &self.field_values
    }

    pub fn tensors(&self) -> Option<&CoefficientTensors<T>> {
        self.tensors.as_ref()
    }

    /// Same `x` and Gaussian coefficients at a different strength.
    pub fn with_strength(&self, v: T) -> Self {
        Self {
            v,
            field_values: scale(self.unit_values.clone(), v),
            ..self.clone()
        }
    }

    /// `max_a |g(z_a)|` over the support the realization was drawn on.
    pub fn sup_abs_field(&self) -> T {
        sup_abs(&self.field_values)
    }

    /// `g(z)` from the coefficient tensors.
    pub fn evaluate_g(&self, z: &UnitVector<T>) -> Result<T> {
        let tensors = self.tensors.as_ref().ok_or(Error::FieldOnlyOnSupport)?;
        Ok(self.v * unit_tensor_field(tensors, &self.x, z)?)
    }
}

/// `max_a |values_a|`; zero for an empty slice.
pub fn sup_abs<T: Real>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

fn unit_tensor_field<T: Real>(tensors: &CoefficientTensors<T>, x: &[T], z: &UnitVector<T>) -> Result<T> {
    let mut weight = T::one();
    let mut total = T::zero();
    for p in 1..=tensors.p_max() {
        weight = weight * T::lit(0.5);
        total = total + weight * x[p - 1] * tensors.component(p, z)?;
    }
    Ok(total)
}

/// Samples every coefficient tensor and evaluates the field on `support`.
pub fn sample_field_tensor<T: Real, R: Rng + ?Sized>(
    dim: usize,
    support: &[UnitVector<T>],
    spec: &FieldSpec<T>,
    x: &[T],
    rng: &mut R,
) -> Result<DisorderRealization<T>> {
    spec.validate()?;
    if spec.backend != Backend::Tensor {
        return Err(Error::param("backend", "tensor sampling needs the tensor backend"));
    }
    if x.len() < spec.p_max {
        return Err(Error::param("x", format!("{} values for p_max = {}", x.len(), spec.p_max)));
    }
    let tensors = CoefficientTensors::sample(dim, spec.p_max, rng)?;
    let unit_values = support
        .iter()
        .map(|z| unit_tensor_field(&tensors, x, z))
        .collect::<Result<Vec<_>>>()?;
    let mut real = DisorderRealization::from_unit_values(spec.v, spec.backend, x[..spec.p_max].to_vec(), unit_values)?;
    real.tensors = Some(tensors);
    Ok(real)
}

/// Draws unit-strength fields on one support for a fixed `x`, whatever the backend.
#[derive(Clone, Debug)]
pub enum UnitFieldSampler<'a, T> {
    Covariance(CovarianceSampler<T>),
    Tensor {
        dim: usize,
        p_max: usize,
        support: &'a [UnitVector<T>],
        x: Vec<T>,
    },
}

impl<'a, T: Real> UnitFieldSampler<'a, T> {
    pub fn new(
        support: &'a [UnitVector<T>],
        overlaps: &OverlapMatrix<T>,
        spec: &FieldSpec<T>,
        x: &[T],
    ) -> Result<Self> {
        let dim = support.first().map_or(0, UnitVector::dim);
        spec.validate_for_dim(dim)?;
        match spec.backend {
            Backend::Tensor => Ok(UnitFieldSampler::Tensor {
                dim,
                p_max: spec.p_max,
                support,
                x: x[..spec.p_max].to_vec(),
            }),
            _ => Ok(UnitFieldSampler::Covariance(CovarianceSampler::new(overlaps, spec, x)?)),
        }
    }

    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<T>> {
        match self {
            UnitFieldSampler::Covariance(s) => Ok(s.sample_unit(rng)),
            UnitFieldSampler::Tensor { dim, p_max, support, x } => {
                let tensors = CoefficientTensors::sample(*dim, *p_max, rng)?;
                support.iter().map(|z| unit_tensor_field(&tensors, x, z)).collect()
            }
        }
    }
}

/// Draws `x` and a field on `support`, returning the full realization.
pub fn sample_disorder<T: Real, R: Rng + ?Sized>(
    support: &[UnitVector<T>],
    overlaps: &OverlapMatrix<T>,
    spec: &FieldSpec<T>,
    rng: &mut R,
) -> Result<DisorderRealization<T>> {
    let x = sample_x(spec.p_max, rng)?;
    match spec.backend {
        Backend::Tensor => {
            let dim = support.first().map_or(0, UnitVector::dim);
            sample_field_tensor(dim, support, spec, &x, rng)
        }
        _ => {
            let unit = CovarianceSampler::new(overlaps, spec, &x)?.sample_unit(rng);
            DisorderRealization::from_unit_values(spec.v, spec.backend, x, unit)
        }
    }
}
