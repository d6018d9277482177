//! Nested Monte-Carlo estimators.
//!
//! Outer layer: uniforms `x_p`, one independent stream per replication.
//! Middle layer: Gaussian fields on the support given `x`.
//! Inner layer: Gibbs averages under the tilted measure, by exact
//! enumeration when affordable.
//!
//! Replication `i` draws from ChaCha stream `i` of the master seed, so results
//! do not depend on thread scheduling. Fields are drawn at unit strength and
//! scaled by `v`, which makes runs at different `v` with one seed share their
//! Gaussian draws.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    combine_components, sample_disorder, sample_x, scale, sup_abs, Backend, CoefficientTensors,
    ComponentSampler, DisorderRealization, FieldSpec, UnitFieldSampler,
};
use crate::real::{log_sum_exp, Real};
use crate::report::{mean_and_stderr, sample_variance, EstimateReport, InnerMode};
use crate::sphere::{
    check_budget, for_each_tuple, opposing_mass, tilted_weights, DiscreteMeasure, OverlapMatrix,
    ReplicaPredicate, ReplicaSampler, ENUMERATION_BUDGET,
};

/// Default ramp width of [`TestFunction::SmoothedIndicator`].
pub const DEFAULT_RAMP_WIDTH: f64 = 0.05;
/// Replica tuples drawn per Gibbs measure when enumeration is over budget.
pub const DEFAULT_INNER_SAMPLES: usize = 4096;

/// Outer (`x`) and middle (Gaussian field) replication counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replication {
    pub x_draws: usize,
    pub field_draws: usize,
}

impl Default for Replication {
    fn default() -> Self {
        Self {
            x_draws: 64,
            field_draws: 256,
        }
    }
}

impl Replication {
    pub fn new(x_draws: usize, field_draws: usize) -> Self {
        Self { x_draws, field_draws }
    }

    fn validate(&self) -> Result<()> {
        if self.x_draws < 2 {
            return Err(Error::param("x_draws", "at least two replications are needed"));
        }
        if self.field_draws == 0 {
            return Err(Error::param("field_draws", "must be positive"));
        }
        Ok(())
    }
}

/// Independent random stream for replication `index` under `seed`.
pub fn replication_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Test function `ψ` on `[-1, 1]`, bounded by one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `1{s <= -epsilon}`.
    IndicatorLeq { epsilon: f64 },
    /// One for `s <= -epsilon`, zero from `-epsilon + width`, linear in between.
    SmoothedIndicator { epsilon: f64, width: f64 },
    /// `s^p`.
    Monomial { p: u32 },
    /// Piecewise-linear interpolation of values on a uniform grid over `[-1, 1]`.
    Table { values: Vec<f64> },
}

impl TestFunction {
    pub fn smoothed(epsilon: f64) -> Self {
        TestFunction::SmoothedIndicator {
            epsilon,
            width: DEFAULT_RAMP_WIDTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunction::IndicatorLeq { epsilon } if !epsilon.is_finite() => {
                Err(Error::param("epsilon", "must be finite"))
            }
            TestFunction::SmoothedIndicator { width, .. } if !(*width > 0.0) => {
                Err(Error::param("width", "ramp width must be positive"))
            }
            TestFunction::Table { values } if values.len() < 2 => {
                Err(Error::param("values", "a table needs at least two nodes"))
            }
            TestFunction::Table { values } if values.iter().any(|v| !(v.abs() <= 1.0)) => {
                Err(Error::param("values", "table entries must lie in [-1, 1]"))
            }
            _ => Ok(()),
        }
    }

    pub fn eval<T: Real>(&self, s: T) -> T {
        match self {
            TestFunction::IndicatorLeq { epsilon } => {
                if s <= -T::lit(*epsilon) {
                    T::one()
                } else {
                    T::zero()
                }
            }
            TestFunction::SmoothedIndicator { epsilon, width } => {
                let t = (s + T::lit(*epsilon)) / T::lit(*width);
                (T::one() - t).max(T::zero()).min(T::one())
            }
            TestFunction::Monomial { p } => s.powi(*p as i32),
            TestFunction::Table { values } => {
                let last = values.len() - 1;
                let pos = ((s.as_f64() + 1.0) * 0.5 * last as f64).clamp(0.0, last as f64);
                let i = (pos.floor() as usize).min(last - 1);
                let frac = pos - i as f64;
                T::lit(values[i] * (1.0 - frac) + values[i + 1] * frac)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            TestFunction::IndicatorLeq { epsilon } => format!("indicator_leq({epsilon})"),
            TestFunction::SmoothedIndicator { epsilon, width } => format!("smoothed_indicator({epsilon};{width})"),
            TestFunction::Monomial { p } => format!("monomial({p})"),
            TestFunction::Table { values } => format!("table({})", values.len()),
        }
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::param("epsilon", "must lie in (0, 1)"))
    }
}

struct Setup<'a, T> {
    measure: &'a DiscreteMeasure<T>,
    overlaps: OverlapMatrix<T>,
    spec: FieldSpec<T>,
}

impl<'a, T: Real> Setup<'a, T> {
    fn new(measure: &'a DiscreteMeasure<T>, spec: &FieldSpec<T>, reps: &Replication) -> Result<Self> {
        spec.validate_for_dim(measure.dim())?;
        reps.validate()?;
        Ok(Self {
            measure,
            overlaps: measure.overlaps()?,
            spec: *spec,
        })
    }

    fn report(&self, estimator: &str, values: &[f64], seed: u64, inner_mode: InnerMode) -> EstimateReport {
        let (mean, stderr) = mean_and_stderr(values);
        EstimateReport {
            estimator: estimator.to_string(),
            v: self.spec.v.as_f64(),
            n: None,
            epsilon: None,
            p_max: self.spec.p_max,
            backend: self.spec.backend,
            reps: values.len(),
            mean,
            stderr,
            inner_mode,
            seed,
        }
    }

    /// Runs `per_x` once per outer replication, in parallel, results in index order.
    fn outer<R, F>(&self, x_draws: usize, seed: u64, per_x: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(&[T], &UnitFieldSampler<'_, T>, &mut ChaCha8Rng) -> Result<R> + Sync,
    {
        (0..x_draws)
            .into_par_iter()
            .map(|i| {
                let mut rng = replication_rng(seed, i as u64);
                let x = sample_x(self.spec.p_max, &mut rng)?;
                let sampler = UnitFieldSampler::new(self.measure.support(), &self.overlaps, &self.spec, &x)?;
                per_x(&x, &sampler, &mut rng)
            })
            .collect()
    }

    fn gibbs_weights(&self, unit_field: Vec<T>) -> Result<Vec<T>> {
        tilted_weights(self.measure.weights(), &scale(unit_field, self.spec.v))
    }
}

/// `E ν_g⊗2{z¹·z² <= -ε}`; the inner double sum is exact.
pub fn estimate_positivity<T: Real>(
    measure: &DiscreteMeasure<T>,
    spec: &FieldSpec<T>,
    eps: f64,
    reps: Replication,
    seed: u64,
) -> Result<EstimateReport> {
    check_epsilon(eps)?;
    let setup = Setup::new(measure, spec, &reps)?;
    check_budget(measure.len(), 2, ENUMERATION_BUDGET)?;
    let eps_t = T::lit(eps);
    let values = setup.outer(reps.x_draws, seed, |_, sampler, rng| {
        let mut acc = 0.0;
        for _ in 0..reps.field_draws {
            let w = setup.gibbs_weights(sampler.sample_unit(rng)?)?;
            let opp = opposing_mass(&w, &setup.overlaps, eps_t);
            let p: T = w.iter().zip(&opp).map(|(&a, &b)| a * b).sum();
            acc += p.as_f64();
        }
        Ok(acc / reps.field_draws as f64)
    })?;
    let mut report = setup.report("positivity", &values, seed, InnerMode::Exact);
    report.epsilon = Some(eps);
    Ok(report)
}

/// Ghirlanda-Guerra residual estimate with its diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GgEstimate {
    /// `E_x |residual|`.
    pub report: EstimateReport,
    /// `E_x residual` without the absolute value.
    pub signed_mean: f64,
    /// Average over `x` of the delta-method standard error of the per-`x` residual
    /// (Gaussian-field and, when sampled, replica noise).
    pub inner_stderr: f64,
}

#[derive(Clone, Copy, Default)]
struct GgTerms {
    /// `<f ψ(z¹·z^{n+1})>`
    joint: f64,
    /// `<f>`
    f: f64,
    /// `<ψ(z¹·z²)>`
    psi: f64,
    /// `Σ_{2<=l<=n} <f ψ(z¹·z^l)>`
    old: f64,
}

fn gg_terms_exact<T: Real>(
    weights: &[T],
    overlaps: &OverlapMatrix<T>,
    f: &ReplicaPredicate<T>,
    psi: &TestFunction,
    budget: u64,
) -> Result<GgTerms> {
    let m = weights.len();
    // s[a] = Σ_k w_k ψ(z_a·z_k): the new replica integrated out
    let s: Vec<T> = (0..m)
        .map(|a| (0..m).map(|k| weights[k] * psi.eval(overlaps.get(a, k))).sum())
        .collect();
    let psi_pair: T = weights.iter().zip(&s).map(|(&w, &sa)| w * sa).sum();
    let n = f.arity();
    let (mut joint, mut fmean, mut old) = (T::zero(), T::zero(), T::zero());
    for_each_tuple(weights, n, budget, |tuple, w| {
        let fv = f.eval(overlaps, tuple);
        if fv == T::zero() {
            return;
        }
        let wf = w * fv;
        fmean = fmean + wf;
        joint = joint + wf * s[tuple[0]];
        for &atom in &tuple[1..] {
            old = old + wf * psi.eval(overlaps.get(tuple[0], atom));
        }
    })?;
    Ok(GgTerms {
        joint: joint.as_f64(),
        f: fmean.as_f64(),
        psi: psi_pair.as_f64(),
        old: old.as_f64(),
    })
}

fn gg_terms_sampled<T: Real, R: Rng + ?Sized>(
    weights: &[T],
    overlaps: &OverlapMatrix<T>,
    f: &ReplicaPredicate<T>,
    psi: &TestFunction,
    samples: usize,
    rng: &mut R,
) -> Result<GgTerms> {
    let sampler = ReplicaSampler::new(weights)?;
    let n = f.arity();
    let mut tuple = vec![0usize; n + 1];
    let mut acc = GgTerms::default();
    for _ in 0..samples {
        sampler.fill(rng, &mut tuple);
        let fv = f.eval(overlaps, &tuple[..n]).as_f64();
        let first = tuple[0];
        acc.psi += psi.eval(overlaps.get(first, tuple[1])).as_f64();
        acc.f += fv;
        if fv != 0.0 {
            acc.joint += fv * psi.eval(overlaps.get(first, tuple[n])).as_f64();
            for &atom in &tuple[1..n] {
                acc.old += fv * psi.eval(overlaps.get(first, atom)).as_f64();
            }
        }
    }
    let k = samples as f64;
    Ok(GgTerms {
        joint: acc.joint / k,
        f: acc.f / k,
        psi: acc.psi / k,
        old: acc.old / k,
    })
}

/// `E_x | E_g<f ψ(z¹·z^{n+1})> - (1/n) E_g<f> E_g<ψ(z¹·z²)> - (1/n) Σ_l E_g<f ψ(z¹·z^l)> |`.
pub fn estimate_gg_residual<T: Real>(
    measure: &DiscreteMeasure<T>,
    spec: &FieldSpec<T>,
    f: &ReplicaPredicate<T>,
    psi: &TestFunction,
    reps: Replication,
    seed: u64,
) -> Result<GgEstimate> {
    estimate_gg_residual_with_budget(measure, spec, f, psi, reps, seed, ENUMERATION_BUDGET)
}

pub fn estimate_gg_residual_with_budget<T: Real>(
    measure: &DiscreteMeasure<T>,
    spec: &FieldSpec<T>,
    f: &ReplicaPredicate<T>,
    psi: &TestFunction,
    reps: Replication,
    seed: u64,
    budget: u64,
) -> Result<GgEstimate> {
    psi.validate()?;
    let setup = Setup::new(measure, spec, &reps)?;
    let n = f.arity();
    let inner_mode = match check_budget(measure.len(), n, budget) {
        Ok(()) => InnerMode::Exact,
        Err(_) => InnerMode::Sampled,
    };
    let nf = n as f64;
    let per_x = setup.outer(reps.x_draws, seed, |_, sampler, rng| {
        let k = reps.field_draws;
        let mut terms = Vec::with_capacity(k);
        for _ in 0..k {
            let w = setup.gibbs_weights(sampler.sample_unit(rng)?)?;
            terms.push(match inner_mode {
                InnerMode::Exact => gg_terms_exact(&w, &setup.overlaps, f, psi, budget)?,
                InnerMode::Sampled => {
                    gg_terms_sampled(&w, &setup.overlaps, f, psi, DEFAULT_INNER_SAMPLES, rng)?
                }
            });
        }
        let kf = k as f64;
        let mean = |g: fn(&GgTerms) -> f64| terms.iter().map(g).sum::<f64>() / kf;
        let (joint, fm, psi_m, old) = (mean(|t| t.joint), mean(|t| t.f), mean(|t| t.psi), mean(|t| t.old));
        let residual = joint - fm * psi_m / nf - old / nf;
        let influence: Vec<f64> = terms
            .iter()
            .map(|t| t.joint - t.old / nf - (t.f * psi_m + fm * t.psi) / nf)
            .collect();
        let se = if k > 1 { mean_and_stderr(&influence).1 } else { f64::NAN };
        Ok((residual, se))
    })?;
    let abs: Vec<f64> = per_x.iter().map(|(r, _)| r.abs()).collect();
    let mut report = setup.report(&format!("gg_residual:{}", psi.label()), &abs, seed, inner_mode);
    report.n = Some(n);
    if let TestFunction::IndicatorLeq { epsilon } | TestFunction::SmoothedIndicator { epsilon, .. } = psi {
        report.epsilon = Some(*epsilon);
    }
    let count = per_x.len() as f64;
    Ok(GgEstimate {
        report,
        signed_mean: per_x.iter().map(|(r, _)| r).sum::<f64>() / count,
        inner_stderr: per_x.iter().map(|(_, s)| s).sum::<f64>() / count,
    })
}

enum ComponentSource<'a, T> {
    Gaussian(ComponentSampler<T>),
    Tensor {
        dim: usize,
        p_max: usize,
        measure: &'a DiscreteMeasure<T>,
    },
}

impl<T: Real> ComponentSource<'_, T> {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Vec<T>>> {
        match self {
            ComponentSource::Gaussian(s) => Ok(s.sample(rng)),
            ComponentSource::Tensor { dim, p_max, measure } => {
                let tensors = CoefficientTensors::sample(*dim, *p_max, rng)?;
                (1..=*p_max)
                    .map(|p| measure.support().iter().map(|z| tensors.component(p, z)).collect())
                    .collect()
            }
        }
    }
}

/// `E <|g_p(z) - E_g<g_p(z)>|>` by nested Monte Carlo.
///
/// Per `x`, a pilot batch of `field_draws` estimates `E_g<g_p>`, and an
/// independent batch of the same size averages the Gibbs absolute deviation.
/// The individual `g_p` come from independent per-order fields whose weighted
/// sum has the law of the full perturbation.
pub fn estimate_lemma1<T: Real>(
    measure: &DiscreteMeasure<T>,
    spec: &FieldSpec<T>,
    p: usize,
    reps: Replication,
    seed: u64,
) -> Result<EstimateReport> {
    reps.validate()?;
    spec.validate_for_dim(measure.dim())?;
    let orders = if spec.backend == Backend::FirstOrder { 1 } else { spec.p_max };
    if p == 0 || p > orders {
        return Err(Error::param("p", format!("order {p} outside 1..={orders}")));
    }
    let overlaps = measure.overlaps()?;
    let source = match spec.backend {
        Backend::Tensor => ComponentSource::Tensor {
            dim: measure.dim(),
            p_max: spec.p_max,
            measure,
        },
        _ => ComponentSource::Gaussian(ComponentSampler::new(&overlaps, spec)?),
    };
    let weights = measure.weights();
    let values: Vec<f64> = (0..reps.x_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = replication_rng(seed, i as u64);
            let x: Vec<T> = sample_x(spec.p_max, &mut rng)?;
            let draw = |rng: &mut ChaCha8Rng| -> Result<(Vec<T>, Vec<T>)> {
                let comps = source.sample(rng)?;
                let g = combine_components(spec.backend, &comps, &x, spec.v);
                let gibbs = tilted_weights(weights, &g)?;
                Ok((gibbs, comps.into_iter().nth(p - 1).expect("order in range")))
            };
            let k = reps.field_draws as f64;
            let mut centre = 0.0;
            for _ in 0..reps.field_draws {
                let (gibbs, gp) = draw(&mut rng)?;
                centre += gibbs.iter().zip(&gp).map(|(&w, &c)| (w * c).as_f64()).sum::<f64>();
            }
            centre /= k;
            let mut dev = 0.0;
            for _ in 0..reps.field_draws {
                let (gibbs, gp) = draw(&mut rng)?;
                dev += gibbs
                    .iter()
                    .zip(&gp)
                    .map(|(&w, &c)| w.as_f64() * (c.as_f64() - centre).abs())
                    .sum::<f64>();
            }
            Ok(dev / k)
        })
        .collect::<Result<_>>()?;
    let (mean, stderr) = mean_and_stderr(&values);
    Ok(EstimateReport {
        estimator: format!("lemma1:p={p}"),
        v: spec.v.as_f64(),
        n: None,
        epsilon: None,
        p_max: spec.p_max,
        backend: spec.backend,
        reps: values.len(),
        mean,
        stderr,
        inner_mode: InnerMode::Exact,
        seed,
    })
}

/// `E <f_n>` with `f_n = 1{z¹·z^l <= -ε, 2 <= l <= n}`.
///
/// The inner average uses `<f_n> = Σ_a G(a) G{z : z_a·z <= -ε}^{n-1}`, which is
/// exact and costs `O(M²)` for every `n`.
pub fn estimate_fn<T: Real>(
    measure: &DiscreteMeasure<T>,
    spec: &FieldSpec<T>,
    n: usize,
    eps: f64,
    reps: Replication,
    seed: u64,
) -> Result<EstimateReport> {
    check_epsilon(eps)?;
    if n < 2 {
        return Err(Error::param("n", "f_n needs n >= 2"));
    }
    let setup = Setup::new(measure, spec, &reps)?;
    let eps_t = T::lit(eps);
    let values = setup.outer(reps.x_draws, seed, |_, sampler, rng| {
        let mut acc = 0.0;
        for _ in 0..reps.field_draws {
            let w = setup.gibbs_weights(sampler.sample_unit(rng)?)?;
            acc += fn_exact(&w, &setup.overlaps, n, eps_t).as_f64();
        }
        Ok(acc / reps.field_draws as f64)
    })?;
    let mut report = setup.report("f_n", &values, seed, InnerMode::Exact);
    report.n = Some(n);
    report.epsilon = Some(eps);
    Ok(report)
}

/// `<f_n>` under the measure with the given weights.
pub fn fn_exact<T: Real>(weights: &[T], overlaps: &OverlapMatrix<T>, n: usize, eps: T) -> T {
    let opp = opposing_mass(weights, overlaps, eps);
    weights
        .iter()
        .zip(&opp)
        .map(|(&w, &m)| w * m.powi(n as i32 - 1))
        .sum()
}

/// Variance of `X = log ∫ e^g dν` against the bound `8a`, `a = v² ξ(1)`, for one `x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSample {
    pub variance: f64,
    pub a: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEstimate {
    /// Mean over `x` of the sample variance of `X`.
    pub report: EstimateReport,
    pub samples: Vec<ConcentrationSample>,
}

pub fn estimate_concentration<T: Real>(
    measure: &DiscreteMeasure<T>,
    spec: &FieldSpec<T>,
    reps: Replication,
    seed: u64,
) -> Result<ConcentrationEstimate> {
    if reps.field_draws < 100 {
        return Err(Error::param("field_draws", "concentration needs at least 100 field draws"));
    }
    let setup = Setup::new(measure, spec, &reps)?;
    let log_w: Vec<T> = measure.weights().iter().map(|w| w.ln()).collect();
    let v = spec.v;
    let samples = setup.outer(reps.x_draws, seed, |x, sampler, rng| {
        let mut xs = Vec::with_capacity(reps.field_draws);
        let mut terms = vec![T::zero(); log_w.len()];
        for _ in 0..reps.field_draws {
            let g = sampler.sample_unit(rng)?;
            for ((t, &lw), &ga) in terms.iter_mut().zip(&log_w).zip(&g) {
                *t = lw + v * ga;
            }
            xs.push(log_sum_exp(&terms).as_f64());
        }
        let variance = sample_variance(&xs);
        let a = (v * v * spec.unit_variance(x)?).as_f64();
        Ok(ConcentrationSample {
            variance,
            a,
            bound: 8.0 * a,
        })
    })?;
    let variances: Vec<f64> = samples.iter().map(|s| s.variance).collect();
    Ok(ConcentrationEstimate {
        report: setup.report("concentration", &variances, seed, InnerMode::Exact),
        samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupScalingRow {
    pub v: f64,
    pub mean_sup: f64,
    pub stderr: f64,
    /// `mean_sup / (v sqrt(N))`; NaN at `v = 0`.
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupScaling {
    pub rows: Vec<SupScalingRow>,
    /// Every draw satisfied `sup|v g₁| == v sup|g₁|` bit for bit.
    pub linear_exact: bool,
}

/// Mean of `max_a |g(z_a)|` across a grid of strengths, one shared set of draws.
pub fn estimate_sup_scaling<T: Real>(
    measure: &DiscreteMeasure<T>,
    v_grid: &[f64],
    spec_base: &FieldSpec<T>,
    reps: Replication,
    seed: u64,
) -> Result<SupScaling> {
    if v_grid.is_empty() || v_grid.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::param("v_grid", "needs finite nonnegative strengths"));
    }
    let setup = Setup::new(measure, &spec_base.with_v(T::one()), &reps)?;
    let per_x = setup.outer(reps.x_draws, seed, |_, sampler, rng| {
        let mut sums = vec![0.0; v_grid.len()];
        let mut exact = true;
        for _ in 0..reps.field_draws {
            let unit = sampler.sample_unit(rng)?;
            let sup_unit = sup_abs(&unit);
            for (sum, &v) in sums.iter_mut().zip(v_grid) {
                let vt = T::lit(v);
                let sup_v = sup_abs(&scale(unit.clone(), vt));
                exact &= sup_v == vt * sup_unit;
                *sum += sup_v.as_f64();
            }
        }
        let k = reps.field_draws as f64;
        Ok((sums.into_iter().map(|s| s / k).collect::<Vec<_>>(), exact))
    })?;
    let root_n = (measure.dim() as f64).sqrt();
    let rows = v_grid
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let column: Vec<f64> = per_x.iter().map(|(sups, _)| sups[j]).collect();
            let (mean_sup, stderr) = mean_and_stderr(&column);
            let constant = if v > 0.0 { mean_sup / (v * root_n) } else { f64::NAN };
            SupScalingRow {
                v,
                mean_sup,
                stderr,
                constant,
            }
        })
        .collect();
    Ok(SupScaling {
        rows,
        linear_exact: per_x.iter().all(|(_, e)| *e),
    })
}

/// A disorder draw together with the two quantities it must control.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationCandidate<T> {
    /// Field on the concatenated supports of the family, in input order.
    pub realization: DisorderRealization<T>,
    /// 1-based attempt number.
    pub attempt: usize,
    /// Family average of `ν_g⊗2{z¹·z² <= -ε}`.
    pub positivity: f64,
    pub sup_abs: f64,
    pub positivity_cap: f64,
    pub sup_cap: f64,
}

impl<T> PerturbationCandidate<T> {
    pub fn succeeds(&self) -> bool {
        self.positivity <= self.positivity_cap && self.sup_abs <= self.sup_cap
    }

    /// Worst ratio of a certificate value to its cap.
    fn violation(&self) -> f64 {
        let ratio = |value: f64, cap: f64| if cap > 0.0 { value / cap } else if value > 0.0 { f64::INFINITY } else { 0.0 };
        ratio(self.positivity, self.positivity_cap).max(ratio(self.sup_abs, self.sup_cap))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PerturbationSearch<T> {
    Found(PerturbationCandidate<T>),
    Exhausted {
        attempts: usize,
        best: PerturbationCandidate<T>,
    },
}

impl<T> PerturbationSearch<T> {
    pub fn is_found(&self) -> bool {
        matches!(self, PerturbationSearch::Found(_))
    }
}

/// Searches for one disorder draw that keeps the family-averaged negative-overlap
/// probability below `4ε` and `max |g|` below `l_cut · v · sqrt(N)`.
pub fn find_good_perturbation<T: Real>(
    family: &[DiscreteMeasure<T>],
    spec: &FieldSpec<T>,
    eps: f64,
    attempts: usize,
    l_cut: f64,
    seed: u64,
) -> Result<PerturbationSearch<T>> {
    check_epsilon(eps)?;
    let first = family
        .first()
        .ok_or_else(|| Error::param("family", "needs at least one measure"))?;
    if attempts == 0 {
        return Err(Error::param("attempts", "must be positive"));
    }
    if !(l_cut > 0.0) {
        return Err(Error::param("l_cut", "must be positive"));
    }
    let dim = first.dim();
    if let Some(m) = family.iter().find(|m| m.dim() != dim) {
        return Err(Error::DimensionMismatch(dim, m.dim()));
    }
    spec.validate_for_dim(dim)?;
    let union: Vec<_> = family.iter().flat_map(|m| m.support().iter().cloned()).collect();
    let union_overlaps = OverlapMatrix::from_points(&union)?;
    let own: Vec<OverlapMatrix<T>> = family.iter().map(|m| m.overlaps()).collect::<Result<_>>()?;
    let eps_t = T::lit(eps);
    let sup_cap = l_cut * spec.v.as_f64() * (dim as f64).sqrt();
    let positivity_cap = 4.0 * eps;

    let mut best: Option<PerturbationCandidate<T>> = None;
    for attempt in 1..=attempts {
        let mut rng = replication_rng(seed, attempt as u64);
        let realization = sample_disorder(&union, &union_overlaps, spec, &mut rng)?;
        let mut offset = 0;
        let mut total = 0.0;
        for (measure, overlaps) in family.iter().zip(&own) {
            let field = &realization.field_values()[offset..offset + measure.len()];
            offset += measure.len();
            total += measure.tilt(field)?.pair_probability_leq(overlaps, eps_t).as_f64();
        }
        let candidate = PerturbationCandidate {
            positivity: total / family.len() as f64,
            sup_abs: realization.sup_abs_field().as_f64(),
            realization,
            attempt,
            positivity_cap,
            sup_cap,
        };
        if candidate.succeeds() {
            return Ok(PerturbationSearch::Found(candidate));
        }
        if best.as_ref().is_none_or(|b| candidate.violation() < b.violation()) {
            best = Some(candidate);
        }
    }
    Ok(PerturbationSearch::Exhausted {
        attempts,
        best: best.expect("at least one attempt"),
    })
}
