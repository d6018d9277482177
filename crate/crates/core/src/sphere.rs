//! Finite-support probability measures on the unit sphere, overlaps,
//! exponential tilting and replica (product measure) averages.

use std::fmt;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Default cap on the number of replica tuples an exact enumeration may visit.
pub const ENUMERATION_BUDGET: u64 = 10_000_000;

/// A point on the unit sphere of `R^N`.
#[derive(Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct UnitVector<T> {
    coords: Vec<T>,
}

impl<T: Real> UnitVector<T> {
    /// Scales `coords` onto the sphere.
    pub fn new(coords: Vec<T>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::EmptyVector);
        }
        let norm = euclidean_norm(&coords);
        if !norm.is_finite() || norm == T::zero() {
            return Err(Error::DegenerateDirection);
        }
        let coords = coords.into_iter().map(|c| c / norm).collect();
        Ok(Self { coords })
    }

    /// Standard basis vector `e_{axis+1}` in `R^dim`.
    pub fn basis(dim: usize, axis: usize) -> Result<Self> {
        if axis >= dim {
            return Err(Error::param("axis", format!("{axis} >= dimension {dim}")));
        }
        let mut coords = vec![T::zero(); dim];
        coords[axis] = T::one();
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn negated(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|&c| -c).collect(),
        }
    }

    pub fn norm(&self) -> T {
        euclidean_norm(&self.coords)
    }
}

impl<T: fmt::Debug> fmt::Debug for UnitVector<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("UnitVector").field(&self.coords).finish()
    }
}

fn euclidean_norm<T: Real>(coords: &[T]) -> T {
    // Scale by the largest magnitude so tiny or huge inputs do not under/overflow.
    let scale = coords.iter().fold(T::zero(), |m, c| m.max(c.abs()));
    if scale == T::zero() || !scale.is_finite() {
        return scale;
    }
    let sum: T = coords.iter().map(|&c| (c / scale) * (c / scale)).sum();
    scale * sum.sqrt()
}

/// Scalar product `z1 · z2`, clamped into `[-1, 1]` when the excess is rounding noise.
pub fn overlap<T: Real>(z1: &UnitVector<T>, z2: &UnitVector<T>) -> Result<T> {
    if z1.dim() != z2.dim() {
        return Err(Error::DimensionMismatch(z1.dim(), z2.dim()));
    }
    let dot: T = z1
        .coords
        .iter()
        .zip(&z2.coords)
        .map(|(&a, &b)| a * b)
        .sum();
    let excess = dot.abs() - T::one();
    if excess <= T::zero() {
        Ok(dot)
    } else if excess <= T::tolerance() {
        Ok(dot.signum())
    } else {
        Err(Error::OverlapOutOfRange(dot.as_f64()))
    }
}

/// Dense symmetric matrix of pairwise overlaps between support atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlapMatrix<T> {
    size: usize,
    data: Vec<T>,
}

impl<T: Real> OverlapMatrix<T> {
    pub fn from_points(points: &[UnitVector<T>]) -> Result<Self> {
        let size = points.len();
        let mut data = vec![T::zero(); size * size];
        for a in 0..size {
            data[a * size + a] = overlap(&points[a], &points[a])?;
            for b in (a + 1)..size {
                let r = overlap(&points[a], &points[b])?;
                data[a * size + b] = r;
                data[b * size + a] = r;
            }
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> T {
        self.data[a * self.size + b]
    }

    pub fn row(&self, a: usize) -> &[T] {
        &self.data[a * self.size..(a + 1) * self.size]
    }
}

/// Probability measure with finitely many atoms on the sphere.
///
/// Duplicate support points are kept as separate atoms. The support is shared
/// between a measure and its tilts.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure<T> {
    support: Arc<[UnitVector<T>]>,
    weights: Vec<T>,
}

impl<T: Real> DiscreteMeasure<T> {
    /// Builds a measure from possibly unnormalized nonnegative weights.
    pub fn new(points: Vec<UnitVector<T>>, weights: Vec<T>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch {
                points: points.len(),
                weights: weights.len(),
            });
        }
        let dim = points[0].dim();
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch(dim, p.dim()));
        }
        let weights = normalize_weights(weights)?;
        Ok(Self {
            support: points.into(),
            weights,
        })
    }

    pub fn point_mass(point: UnitVector<T>) -> Self {
        Self {
            support: vec![point].into(),
            weights: vec![T::one()],
        }
    }

    pub fn dim(&self) -> usize {
        self.support[0].dim()
    }

    /// Number of atoms `M`.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn support(&self) -> &[UnitVector<T>] {
        &self.support
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn overlaps(&self) -> Result<OverlapMatrix<T>> {
        OverlapMatrix::from_points(&self.support)
    }

    /// Same support, new (unnormalized) weights.
    pub fn reweighted(&self, weights: Vec<T>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::LengthMismatch {
                points: self.len(),
                weights: weights.len(),
            });
        }
        Ok(Self {
            support: Arc::clone(&self.support),
            weights: normalize_weights(weights)?,
        })
    }

    /// Gibbs measure with density proportional to `exp(field)` relative to `self`.
    pub fn tilt(&self, field: &[T]) -> Result<Self> {
        Ok(Self {
            support: Arc::clone(&self.support),
            weights: tilted_weights(&self.weights, field)?,
        })
    }

    /// Barycenter `Σ_a w_a z_a`.
    pub fn barycenter(&self) -> Vec<T> {
        let mut center = vec![T::zero(); self.dim()];
        for (z, &w) in self.support.iter().zip(&self.weights) {
            for (c, &zi) in center.iter_mut().zip(z.coords()) {
                *c = *c + w * zi;
            }
        }
        center
    }

    /// `<z1 · z2>` under the product of two copies, as the squared barycenter norm.
    pub fn mean_overlap(&self) -> T {
        self.barycenter().iter().map(|&c| c * c).sum()
    }

    /// For each atom `a`, the mass `G{z : z_a · z <= -eps}`.
    pub fn opposing_mass(&self, overlaps: &OverlapMatrix<T>, eps: T) -> Vec<T> {
        opposing_mass(&self.weights, overlaps, eps)
    }

    /// `G⊗2{z1 · z2 <= -eps}` by the exact double sum.
    pub fn pair_probability_leq(&self, overlaps: &OverlapMatrix<T>, eps: T) -> T {
        let opp = self.opposing_mass(overlaps, eps);
        self.weights.iter().zip(&opp).map(|(&w, &m)| w * m).sum()
    }

    pub fn sampler(&self) -> Result<ReplicaSampler> {
        ReplicaSampler::new(&self.weights)
    }

    pub fn to_document(&self) -> MeasureDocument {
        MeasureDocument {
            dim: self.dim(),
            atoms: self
                .support
                .iter()
                .zip(&self.weights)
                .map(|(z, &w)| AtomDocument {
                    coords: z.coords().iter().map(|c| c.as_f64()).collect(),
                    weight: w.as_f64(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &MeasureDocument) -> Result<Self> {
        let mut points = Vec::with_capacity(doc.atoms.len());
        let mut weights = Vec::with_capacity(doc.atoms.len());
        for (index, atom) in doc.atoms.iter().enumerate() {
            if atom.coords.len() != doc.dim {
                return Err(Error::DimensionMismatch(doc.dim, atom.coords.len()));
            }
            let norm = euclidean_norm(&atom.coords);
            if !((norm - 1.0).abs() <= 1e-9) {
                return Err(Error::NotOnSphere { index, norm });
            }
            let coords: Vec<T> = atom.coords.iter().map(|&c| T::lit(c)).collect();
            points.push(UnitVector::new(coords)?);
            weights.push(T::lit(atom.weight));
        }
        Self::new(points, weights)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("measure document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MeasureDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

/// Wire format of a measure: `{ "dim": N, "atoms": [ { "coords": [...], "weight": w } ] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureDocument {
    pub dim: usize,
    pub atoms: Vec<AtomDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomDocument {
    pub coords: Vec<f64>,
    pub weight: f64,
}

fn normalize_weights<T: Real>(weights: Vec<T>) -> Result<Vec<T>> {
    for (index, &w) in weights.iter().enumerate() {
        if !(w >= T::zero()) || !w.is_finite() {
            return Err(Error::InvalidWeight {
                index,
                value: w.as_f64(),
            });
        }
    }
    let total: T = weights.iter().copied().sum();
    if total == T::zero() {
        return Err(Error::ZeroMass);
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// `w_a exp(field_a - max)` renormalized. The max runs over charged atoms only,
/// so at least one atom keeps its prior weight and the total never underflows.
pub(crate) fn tilted_weights<T: Real>(weights: &[T], field: &[T]) -> Result<Vec<T>> {
    if field.len() != weights.len() {
        return Err(Error::FieldLength {
            expected: weights.len(),
            got: field.len(),
        });
    }
    if let Some(index) = field.iter().position(|f| !f.is_finite()) {
        return Err(Error::NonFiniteField { index });
    }
    let shift = weights
        .iter()
        .zip(field)
        .filter(|(&w, _)| w > T::zero())
        .map(|(_, &f)| f)
        .fold(T::neg_infinity(), T::max);
    let raw: Vec<T> = weights
        .iter()
        .zip(field)
        .map(|(&w, &f)| if w > T::zero() { w * (f - shift).exp() } else { T::zero() })
        .collect();
    let total: T = raw.iter().copied().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

pub(crate) fn opposing_mass<T: Real>(weights: &[T], overlaps: &OverlapMatrix<T>, eps: T) -> Vec<T> {
    (0..weights.len())
        .map(|a| {
            overlaps
                .row(a)
                .iter()
                .zip(weights)
                .filter(|(&r, _)| r <= -eps)
                .map(|(_, &w)| w)
                .sum()
        })
        .collect()
}

/// I.i.d. categorical draws of atom indices.
#[derive(Clone, Debug)]
pub struct ReplicaSampler {
    index: WeightedIndex<f64>,
}

impl ReplicaSampler {
    pub fn new<T: Real>(weights: &[T]) -> Result<Self> {
        let w: Vec<f64> = weights.iter().map(|w| w.as_f64()).collect();
        let index = WeightedIndex::new(&w).map_err(|e| Error::param("weights", e.to_string()))?;
        Ok(Self { index })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [usize]) {
        for slot in out {
            *slot = self.index.sample(rng);
        }
    }
}

/// `n` i.i.d. replica indices drawn from `measure`.
pub fn sample_replicas<T: Real, R: Rng + ?Sized>(
    measure: &DiscreteMeasure<T>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::param("n", "at least one replica is required"));
    }
    let sampler = measure.sampler()?;
    let mut out = vec![0; n];
    sampler.fill(rng, &mut out);
    Ok(out)
}

/// Overlaps among the atoms selected by one replica tuple.
pub struct ReplicaOverlaps<'a, T> {
    overlaps: &'a OverlapMatrix<T>,
    tuple: &'a [usize],
}

impl<'a, T: Real> ReplicaOverlaps<'a, T> {
    pub fn new(overlaps: &'a OverlapMatrix<T>, tuple: &'a [usize]) -> Self {
        Self { overlaps, tuple }
    }

    /// Overlap between replicas `l` and `m` (zero based).
    #[inline]
    pub fn get(&self, l: usize, m: usize) -> T {
        self.overlaps.get(self.tuple[l], self.tuple[m])
    }

    pub fn atoms(&self) -> &[usize] {
        self.tuple
    }

    pub fn arity(&self) -> usize {
        self.tuple.len()
    }
}

type CustomRule<T> = Arc<dyn Fn(&ReplicaOverlaps<'_, T>) -> T + Send + Sync>;

#[derive(Clone)]
enum Rule<T> {
    Constant(T),
    FirstOverlapsLeq(T),
    OverlapLeq { l: usize, m: usize, eps: T },
    Custom(CustomRule<T>),
}

/// A function `f` on `S^n` with `|f| <= 1`, expressed through replica overlaps.
#[derive(Clone)]
pub struct ReplicaPredicate<T> {
    arity: usize,
    rule: Rule<T>,
}

impl<T: Real> ReplicaPredicate<T> {
    pub fn constant(arity: usize, value: T) -> Result<Self> {
        check_arity(arity)?;
        if value.abs() > T::one() {
            return Err(Error::param("value", "constant must lie in [-1, 1]"));
        }
        Ok(Self {
            arity,
            rule: Rule::Constant(value),
        })
    }

    /// `1{z1·z_l <= -eps for every 2 <= l <= n}`; identically one for `n = 1`.
    pub fn all_opposed_to_first(arity: usize, eps: T) -> Result<Self> {
        check_arity(arity)?;
        Ok(Self {
            arity,
            rule: Rule::FirstOverlapsLeq(eps),
        })
    }

    /// `1{z_l · z_m <= -eps}` for zero-based replica indices.
    pub fn overlap_leq(arity: usize, l: usize, m: usize, eps: T) -> Result<Self> {
        check_arity(arity)?;
        if l >= arity || m >= arity {
            return Err(Error::param("replica", format!("index out of range for arity {arity}")));
        }
        Ok(Self {
            arity,
            rule: Rule::OverlapLeq { l, m, eps },
        })
    }

    /// Arbitrary rule; results must stay in `[-1, 1]`.
    pub fn custom<F>(arity: usize, rule: F) -> Result<Self>
    where
        F: Fn(&ReplicaOverlaps<'_, T>) -> T + Send + Sync + 'static,
    {
        check_arity(arity)?;
        Ok(Self {
            arity,
            rule: Rule::Custom(Arc::new(rule)),
        })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn eval(&self, overlaps: &OverlapMatrix<T>, tuple: &[usize]) -> T {
        debug_assert!(tuple.len() >= self.arity);
        let view = ReplicaOverlaps::new(overlaps, tuple);
        let value = match &self.rule {
            Rule::Constant(c) => *c,
            Rule::FirstOverlapsLeq(eps) => {
                let all = (1..self.arity).all(|l| view.get(0, l) <= -*eps);
                if all {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Rule::OverlapLeq { l, m, eps } => {
                if view.get(*l, *m) <= -*eps {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Rule::Custom(f) => f(&view),
        };
        debug_assert!(value.abs() <= T::one(), "replica predicate left [-1, 1]");
        value
    }
}

impl<T: fmt::Debug> fmt::Debug for ReplicaPredicate<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rule = match &self.rule {
            Rule::Constant(c) => format!("constant({c:?})"),
            Rule::FirstOverlapsLeq(e) => format!("all_opposed_to_first({e:?})"),
            Rule::OverlapLeq { l, m, eps } => format!("overlap_leq({l}, {m}, {eps:?})"),
            Rule::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("ReplicaPredicate")
            .field("arity", &self.arity)
            .field("rule", &rule)
            .finish()
    }
}

fn check_arity(arity: usize) -> Result<()> {
    if arity == 0 {
        Err(Error::param("arity", "must be positive"))
    } else {
        Ok(())
    }
}

/// Fails unless `atoms^arity <= budget`.
pub fn check_budget(atoms: usize, arity: usize, budget: u64) -> Result<()> {
    let needed = (atoms as f64).powi(arity as i32);
    if needed > budget as f64 {
        Err(Error::BudgetExceeded { needed, budget })
    } else {
        Ok(())
    }
}

/// Visits every `arity`-tuple of atom indices with its product weight.
/// Zero-weight atoms are skipped; they contribute nothing to any average.
pub fn for_each_tuple<T: Real, F>(weights: &[T], arity: usize, budget: u64, mut visit: F) -> Result<()>
where
    F: FnMut(&[usize], T),
{
    check_budget(weights.len(), arity, budget)?;
    let charged: Vec<usize> = (0..weights.len()).filter(|&a| weights[a] > T::zero()).collect();
    if charged.is_empty() || arity == 0 {
        return Ok(());
    }
    let mut digits = vec![0usize; arity];
    let mut tuple = vec![charged[0]; arity];
    // prefix[k] = product of the first k tuple weights
    let mut prefix = vec![T::one(); arity + 1];
    for k in 0..arity {
        prefix[k + 1] = prefix[k] * weights[tuple[k]];
    }
    loop {
        visit(&tuple, prefix[arity]);
        let mut k = arity;
        loop {
            if k == 0 {
                return Ok(());
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < charged.len() {
                break;
            }
            digits[k] = 0;
        }
        for j in k..arity {
            tuple[j] = charged[digits[j]];
            prefix[j + 1] = prefix[j] * weights[tuple[j]];
        }
    }
}

/// `<pred>` under `G⊗n` by summing over every `n`-tuple of atoms.
pub fn product_probability_exact<T: Real>(
    measure: &DiscreteMeasure<T>,
    pred: &ReplicaPredicate<T>,
) -> Result<T> {
    product_probability_with_budget(measure, pred, ENUMERATION_BUDGET)
}

pub fn product_probability_with_budget<T: Real>(
    measure: &DiscreteMeasure<T>,
    pred: &ReplicaPredicate<T>,
    budget: u64,
) -> Result<T> {
    let overlaps = measure.overlaps()?;
    let mut total = T::zero();
    for_each_tuple(measure.weights(), pred.arity(), budget, |tuple, w| {
        total = total + w * pred.eval(&overlaps, tuple);
    })?;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(dim: usize, axis: usize) -> UnitVector<f64> {
        UnitVector::basis(dim, axis).unwrap()
    }

    fn antipodal() -> DiscreteMeasure<f64> {
        DiscreteMeasure::new(vec![e(1, 0), e(1, 0).negated()], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn unit_vector_normalizes() {
        let z = UnitVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(z.coords(), &[0.6, 0.8]);
        let z = UnitVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(z.coords(), &[1.0, 0.0, 0.0]);
        assert_eq!(UnitVector::new(vec![0.0, 0.0]), Err(Error::DegenerateDirection));
        assert_eq!(UnitVector::<f64>::new(vec![]), Err(Error::EmptyVector));
        assert_eq!(UnitVector::new(vec![f64::NAN, 1.0]), Err(Error::DegenerateDirection));
    }

    #[test]
    fn tiny_and_huge_coordinates_normalize() {
        let z = UnitVector::new(vec![1e-300, 1e-300]).unwrap();
        assert_abs_diff_eq!(z.norm(), 1.0, epsilon = 1e-12);
        let z = UnitVector::new(vec![1e300, -1e300]).unwrap();
        assert_abs_diff_eq!(z.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap(&e(2, 0), &e(2, 0)).unwrap(), 1.0);
        assert_eq!(overlap(&e(2, 0), &e(2, 0).negated()).unwrap(), -1.0);
        let z = UnitVector::new(vec![0.6, 0.8]).unwrap();
        assert_abs_diff_eq!(overlap(&z, &e(2, 0)).unwrap(), 0.6, epsilon = 1e-15);
        assert_eq!(overlap(&e(2, 0), &e(3, 0)), Err(Error::DimensionMismatch(2, 3)));
    }

    #[test]
    fn overlap_clamps_rounding_excess() {
        let z = UnitVector::new(vec![1.0, 1.0, 1.0]).unwrap();
        let r = overlap(&z, &z).unwrap();
        assert!(r <= 1.0);
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn make_measure_normalizes_weights() {
        let m = antipodal();
        assert_eq!(m.weights(), &[0.5, 0.5]);
        let m = DiscreteMeasure::new(vec![e(1, 0)], vec![7.0]).unwrap();
        assert_eq!(m.weights(), &[1.0]);
        let err = DiscreteMeasure::new(vec![e(2, 0), e(2, 1)], vec![1.0, -1.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidWeight { index: 1, .. }));
        let err = DiscreteMeasure::new(vec![e(2, 0), e(2, 1)], vec![0.0, 0.0]).unwrap_err();
        assert_eq!(err, Error::ZeroMass);
        let err = DiscreteMeasure::new(vec![e(2, 0), e(3, 1)], vec![1.0, 1.0]).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch(2, 3));
        assert_eq!(DiscreteMeasure::<f64>::new(vec![], vec![]).unwrap_err(), Error::EmptyMeasure);
    }

    #[test]
    fn tilt_examples() {
        let m = antipodal();
        assert_eq!(m.tilt(&[0.0, 0.0]).unwrap().weights(), m.weights());
        assert_eq!(m.tilt(&[5.0, 5.0]).unwrap().weights(), m.weights());
        let t = m.tilt(&[3f64.ln(), 0.0]).unwrap();
        assert_abs_diff_eq!(t.weights()[0], 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(t.weights()[1], 0.25, epsilon = 1e-15);
        assert_eq!(m.tilt(&[1.0]).unwrap_err(), Error::FieldLength { expected: 2, got: 1 });
        assert_eq!(
            m.tilt(&[f64::INFINITY, 0.0]).unwrap_err(),
            Error::NonFiniteField { index: 0 }
        );
    }

    #[test]
    fn tilt_survives_huge_fields_and_dead_atoms() {
        let m = DiscreteMeasure::new(vec![e(2, 0), e(2, 1)], vec![0.0, 1.0]).unwrap();
        let t = m.tilt(&[5000.0, 0.0]).unwrap();
        assert_eq!(t.weights(), &[0.0, 1.0]);
        let m = antipodal();
        let t = m.tilt(&[800.0, -800.0]).unwrap();
        assert_eq!(t.weights(), &[1.0, 0.0]);
    }

    #[test]
    fn product_probability_examples() {
        let m = antipodal();
        let pred = ReplicaPredicate::overlap_leq(2, 0, 1, 0.5).unwrap();
        assert_abs_diff_eq!(product_probability_exact(&m, &pred).unwrap(), 0.5, epsilon = 1e-15);

        let point = DiscreteMeasure::point_mass(e(3, 2));
        assert_eq!(product_probability_exact(&point, &pred).unwrap(), 0.0);

        // e1, e2, e3: every pairwise overlap is 0 or 1
        let simplex =
            DiscreteMeasure::new(vec![e(3, 0), e(3, 1), e(3, 2)], vec![1.0, 1.0, 1.0]).unwrap();
        let pred = ReplicaPredicate::overlap_leq(2, 0, 1, 0.1).unwrap();
        assert_eq!(product_probability_exact(&simplex, &pred).unwrap(), 0.0);
    }

    #[test]
    fn enumeration_budget_is_enforced() {
        let m = antipodal();
        let pred = ReplicaPredicate::all_opposed_to_first(5, 0.5).unwrap();
        let err = product_probability_with_budget(&m, &pred, 16).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
        assert!(product_probability_with_budget(&m, &pred, 32).is_ok());
    }

    #[test]
    fn tuple_enumeration_visits_all_charged_tuples() {
        let w = [0.5, 0.0, 0.25, 0.25];
        let mut count = 0;
        let mut total = 0.0;
        for_each_tuple(&w, 3, 1000, |_, p| {
            count += 1;
            total += p;
        })
        .unwrap();
        assert_eq!(count, 27);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn sample_replicas_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let point = DiscreteMeasure::point_mass(e(2, 0));
        assert_eq!(sample_replicas(&point, 3, &mut rng).unwrap(), vec![0, 0, 0]);
        let m = DiscreteMeasure::new(vec![e(2, 0), e(2, 1)], vec![1.0, 0.0]).unwrap();
        assert_eq!(sample_replicas(&m, 1, &mut rng).unwrap(), vec![0]);
        assert!(sample_replicas(&m, 0, &mut rng).is_err());

        let m = antipodal();
        let draws = sample_replicas(&m, 100_000, &mut rng).unwrap();
        let freq = draws.iter().filter(|&&i| i == 0).count() as f64 / 1e5;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");

        let a = sample_replicas(&m, 20, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_replicas(&m, 20, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_overlap_examples() {
        assert_eq!(antipodal().mean_overlap(), 0.0);
        assert_eq!(DiscreteMeasure::point_mass(e(4, 1)).mean_overlap(), 1.0);
        let m = DiscreteMeasure::new(vec![e(1, 0), e(1, 0).negated()], vec![3.0, 1.0]).unwrap();
        assert_abs_diff_eq!(m.mean_overlap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn duplicates_are_separate_atoms() {
        let m = DiscreteMeasure::new(vec![e(2, 0), e(2, 0), e(2, 1)], vec![1.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.weights(), &[0.25, 0.25, 0.5]);
        assert_eq!(m.overlaps().unwrap().get(0, 1), 1.0);
    }

    #[test]
    fn json_document_round_trip() {
        let text = r#"{ "dim": 2, "atoms": [ { "coords": [1.0, 0.0], "weight": 3 },
                                              { "coords": [0.6, -0.8], "weight": 1 } ] }"#;
        let m = DiscreteMeasure::<f64>::from_json(text).unwrap();
        assert_eq!(m.weights(), &[0.75, 0.25]);
        let back = DiscreteMeasure::<f64>::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);

        let off = r#"{ "dim": 2, "atoms": [ { "coords": [0.5, 0.0], "weight": 1 } ] }"#;
        assert!(matches!(
            DiscreteMeasure::<f64>::from_json(off).unwrap_err(),
            Error::NotOnSphere { index: 0, .. }
        ));
        let bad_dim = r#"{ "dim": 3, "atoms": [ { "coords": [1.0, 0.0], "weight": 1 } ] }"#;
        assert!(DiscreteMeasure::<f64>::from_json(bad_dim).is_err());
    }

    #[test]
    fn single_precision_measure() {
        let z = UnitVector::<f32>::new(vec![3.0, 4.0]).unwrap();
        let m = DiscreteMeasure::new(vec![z.clone(), z.negated()], vec![1.0, 1.0]).unwrap();
        let ov = m.overlaps().unwrap();
        assert!((m.pair_probability_leq(&ov, 0.5) - 0.5).abs() < 1e-6);
    }
}
