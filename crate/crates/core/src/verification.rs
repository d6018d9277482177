//! Deterministic checks of the analytic inequalities behind the positivity
//! argument. Every check is a pure function of its inputs.

use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::estimators::fn_exact;
use crate::real::Real;
use crate::sphere::{product_probability_exact, DiscreteMeasure, ReplicaPredicate};

/// Step of the central difference used when no closed-form derivative is given.
pub const DIFF_STEP: f64 = 1e-6;
/// Second differences below this count as a convexity violation.
pub const CONVEXITY_SLACK: f64 = -1e-8;
/// Relative tolerance of the convexity lemma check.
pub const LEMMA_TOL: f64 = 1e-8;
/// Absolute slack for exact-enumeration inequalities.
pub const EXACT_TOL: f64 = 1e-12;

/// One check's outcome: `{ "check", "inputs", "lhs", "rhs", "pass" }`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub inputs: Value,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl CheckReport {
    fn new(check: &str, inputs: Value, lhs: f64, rhs: f64, pass: bool) -> Self {
        Self {
            check: check.to_string(),
            inputs,
            lhs,
            rhs,
            pass,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("check report serializes")
    }
}

type RealFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Real function of one variable with an optional closed-form derivative.
#[derive(Clone)]
pub struct ScalarFn<T> {
    name: String,
    value: RealFn<T>,
    derivative: Option<RealFn<T>>,
}

impl<T: Real> ScalarFn<T> {
    pub fn new(name: impl Into<String>, value: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            derivative: None,
        }
    }

    pub fn with_derivative(mut self, derivative: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: T) -> T {
        (self.value)(x)
    }

    pub fn derivative(&self, x: T) -> T {
        match &self.derivative {
            Some(d) => d(x),
            None => {
                let h = T::lit(DIFF_STEP);
                (self.eval(x + h) - self.eval(x - h)) / (h + h)
            }
        }
    }

    /// First grid point in `[lo, hi]` where the second difference is below the slack.
    fn convexity_violation(&self, lo: T, hi: T, points: usize) -> Option<T> {
        let step = (hi - lo) / T::from_usize_lossy(points - 1);
        let slack = T::lit(CONVEXITY_SLACK);
        (1..points - 1)
            .map(|i| lo + step * T::from_usize_lossy(i))
            .find(|&x| self.eval(x - step) - (self.eval(x) + self.eval(x)) + self.eval(x + step) < slack)
    }
}

/// The two convex functions compared by the convexity lemma.
#[derive(Clone)]
pub struct ScalarFunctionPair<T> {
    pub theta: ScalarFn<T>,
    pub psi: ScalarFn<T>,
}

impl<T: Real> ScalarFunctionPair<T> {
    pub fn new(theta: ScalarFn<T>, psi: ScalarFn<T>) -> Self {
        Self { theta, psi }
    }

    pub fn label(&self) -> String {
        format!("{} vs {}", self.theta.name, self.psi.name)
    }
}

/// Grid resolution of the convexity precondition.
pub const CONVEXITY_PROBES: usize = 65;

/// `|θ'(x) - ψ'(x)| <= ψ'(x+y) - ψ'(x-y)
///     + (|ψ(x+y) - θ(x+y)| + |ψ(x-y) - θ(x-y)| + |ψ(x) - θ(x)|) / y`.
pub fn check_convexity_lemma<T: Real>(pair: &ScalarFunctionPair<T>, x: T, y: T) -> Result<CheckReport> {
    if !(y > T::zero()) {
        return Err(Error::param("y", "must be positive"));
    }
    for f in [&pair.theta, &pair.psi] {
        if let Some(at) = f.convexity_violation(x - y, x + y, CONVEXITY_PROBES) {
            return Err(Error::NotConvex {
                function: f.name.clone(),
                at: at.as_f64(),
            });
        }
    }
    let (theta, psi) = (&pair.theta, &pair.psi);
    let lhs = (theta.derivative(x) - psi.derivative(x)).abs();
    let gap = |t: T| (psi.eval(t) - theta.eval(t)).abs();
    let rhs = psi.derivative(x + y) - psi.derivative(x - y) + (gap(x + y) + gap(x - y) + gap(x)) / y;
    let (lhs, rhs) = (lhs.as_f64(), rhs.as_f64());
    let pass = lhs <= rhs + LEMMA_TOL * (1.0 + rhs.abs());
    Ok(CheckReport::new(
        "convexity_lemma",
        json!({ "pair": pair.label(), "x": x.as_f64(), "y": y.as_f64() }),
        lhs,
        rhs,
        pass,
    ))
}

/// Quantities of the set-`U` bound for one measure.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GuReport {
    /// `<f_n>` by enumeration of `n`-tuples.
    pub fn_value: f64,
    /// `G(U)`, `U = {z¹ : G{z² : z¹·z² <= -ε} >= γ}`.
    pub g_u: f64,
    pub gamma_pow: f64,
    /// `2(1 - γ)/ε`.
    pub u_bound: f64,
    pub holds_gu: bool,
    pub holds_u_bound: bool,
}

impl GuReport {
    pub fn pass(&self) -> bool {
        self.holds_gu && self.holds_u_bound
    }
}

/// `<f_n> <= G(U) + γ^{n-1}` and `G(U) <= 2(1 - γ)/ε`.
pub fn check_gu_bound<T: Real>(measure: &DiscreteMeasure<T>, n: usize, eps: f64, gamma: f64) -> Result<GuReport> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param("gamma", "must lie in (0, 1)"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param("epsilon", "must lie in (0, 1)"));
    }
    let eps_t = T::lit(eps);
    let pred = ReplicaPredicate::all_opposed_to_first(n, eps_t)?;
    let fn_value = product_probability_exact(measure, &pred)?.as_f64();
    let overlaps = measure.overlaps()?;
    let opposing = measure.opposing_mass(&overlaps, eps_t);
    let g_u: f64 = measure
        .weights()
        .iter()
        .zip(&opposing)
        .filter(|(_, m)| m.as_f64() >= gamma)
        .map(|(w, _)| w.as_f64())
        .sum();
    let gamma_pow = gamma.powi(n as i32 - 1);
    let u_bound = 2.0 * (1.0 - gamma) / eps;
    Ok(GuReport {
        fn_value,
        g_u,
        gamma_pow,
        u_bound,
        holds_gu: fn_value <= g_u + gamma_pow + EXACT_TOL,
        holds_u_bound: g_u <= u_bound + EXACT_TOL,
    })
}

pub fn gu_check_report<T: Real>(measure: &DiscreteMeasure<T>, n: usize, eps: f64, gamma: f64) -> Result<CheckReport> {
    let r = check_gu_bound(measure, n, eps, gamma)?;
    Ok(CheckReport::new(
        "gu_bound",
        json!({ "atoms": measure.len(), "n": n, "epsilon": eps, "gamma": gamma, "g_u": r.g_u, "u_bound": r.u_bound }),
        r.fn_value,
        r.g_u + r.gamma_pow,
        r.pass(),
    ))
}

/// `ε <= (1 + ε) G⊗2{z¹·z² > -ε}`, by the exact double sum.
pub fn check_pos1<T: Real>(measure: &DiscreteMeasure<T>, eps: f64) -> Result<CheckReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param("epsilon", "must lie in (0, 1)"));
    }
    let overlaps = measure.overlaps()?;
    let w = measure.weights();
    let mut above = 0.0;
    for a in 0..w.len() {
        for b in 0..w.len() {
            if overlaps.get(a, b).as_f64() > -eps {
                above += (w[a] * w[b]).as_f64();
            }
        }
    }
    let rhs = (1.0 + eps) * above;
    Ok(CheckReport::new(
        "pos1",
        json!({ "atoms": measure.len(), "epsilon": eps }),
        eps,
        rhs,
        eps <= rhs + EXACT_TOL,
    ))
}

/// `h(γ) = 2(1 - γ)/ε + exp(-(n - 1)(1 - γ))`.
pub fn step2_objective(n: usize, eps: f64, gamma: f64) -> f64 {
    2.0 * (1.0 - gamma) / eps + (-((n - 1) as f64) * (1.0 - gamma)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Step2Report {
    pub gamma_star: f64,
    pub value: f64,
}

/// Infimum of the convex objective [`step2_objective`] over `γ ∈ (0, 1)`, by golden-section search.
pub fn check_step2_bound(n: usize, eps: f64) -> Result<Step2Report> {
    if n < 2 {
        return Err(Error::param("n", "must be at least 2"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param("epsilon", "must lie in (0, 1)"));
    }
    let h = |g: f64| step2_objective(n, eps, g);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (h(c), h(d));
    while hi - lo > 1e-10 {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = h(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = h(d);
        }
    }
    let mut gamma_star = 0.5 * (lo + hi);
    // the infimum sits at the closed end γ = 1 when h is decreasing throughout
    if h(1.0) <= h(gamma_star) {
        gamma_star = 1.0;
    }
    Ok(Step2Report {
        gamma_star,
        value: h(gamma_star),
    })
}

/// `<f_n> <= min_γ h(γ)` for one measure.
pub fn check_fn_below_step2<T: Real>(measure: &DiscreteMeasure<T>, n: usize, eps: f64) -> Result<CheckReport> {
    let bound = check_step2_bound(n, eps)?;
    let overlaps = measure.overlaps()?;
    let fn_value = fn_exact(measure.weights(), &overlaps, n, T::lit(eps)).as_f64();
    Ok(CheckReport::new(
        "fn_below_step2",
        json!({ "atoms": measure.len(), "n": n, "epsilon": eps, "gamma_star": bound.gamma_star }),
        fn_value,
        bound.value,
        fn_value <= bound.value + EXACT_TOL,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InductionReport {
    pub a: f64,
    pub n: usize,
    /// `P(a, n) = a ∏_{l=2}^{n-1} (l - 1 + a)/l`.
    pub product: f64,
    /// `P(a, n) n^{1-a} / a`; absent at `a = 0`.
    pub constant: Option<f64>,
    /// Smallest `(l-1+a)/l - exp(-(1-a)/l - 1/l²)` over `2 <= l <= n-1`.
    pub worst_margin: f64,
    pub factors_hold: bool,
}

/// `(l - 1 + a)/l >= exp(-(1 - a)/l - 1/l²)`.
pub fn induction_factor_margin(a: f64, l: usize) -> f64 {
    let lf = l as f64;
    (lf - 1.0 + a) / lf - (-(1.0 - a) / lf - 1.0 / (lf * lf)).exp()
}

pub fn check_induction_bound(a: f64, n: usize) -> Result<InductionReport> {
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::param("a", format!("{a} outside [0, 1]")));
    }
    if n < 3 {
        return Err(Error::param("n", "must be at least 3"));
    }
    let mut product = a;
    let mut worst_margin = f64::INFINITY;
    for l in 2..n {
        let lf = l as f64;
        product *= (lf - 1.0 + a) / lf;
        worst_margin = worst_margin.min(induction_factor_margin(a, l));
    }
    let constant = (a > 0.0).then(|| product * (n as f64).powf(1.0 - a) / a);
    Ok(InductionReport {
        a,
        n,
        product,
        constant,
        worst_margin,
        factors_hold: worst_margin >= 0.0,
    })
}

/// `<z¹·z²>` as a double sum equals `Σ_i <z_i>²`, and is nonnegative.
pub fn check_mean_overlap_identity<T: Real>(measure: &DiscreteMeasure<T>) -> Result<CheckReport> {
    let overlaps = measure.overlaps()?;
    let w = measure.weights();
    let mut double_sum = T::zero();
    for a in 0..w.len() {
        for b in 0..w.len() {
            double_sum = double_sum + w[a] * w[b] * overlaps.get(a, b);
        }
    }
    let lhs = double_sum.as_f64();
    let rhs = measure.mean_overlap().as_f64();
    let tol = T::tolerance().as_f64();
    Ok(CheckReport::new(
        "mean_overlap_identity",
        json!({ "atoms": measure.len(), "dim": measure.dim() }),
        lhs,
        rhs,
        (lhs - rhs).abs() <= tol && rhs >= 0.0 && lhs >= -tol,
    ))
}

/// Arithmetic consistency of the closing step: with the measured `a`, the
/// step-two bound `b = min_γ h(γ)` and a measured `E|δ|`,
/// `a <= a_0 + n^{-a_0} ((L/ε) log(nε) + E|δ|)` where `L` is chosen so that
/// `(L/(nε)) log(nε) = b`.
pub fn check_step3_chain(a: f64, n: usize, eps: f64, a0: f64, delta_abs: f64) -> Result<CheckReport> {
    if !(a0 > 0.0 && a0 < 1.0) {
        return Err(Error::param("a0", "must lie in (0, 1)"));
    }
    if !((n as f64) * eps > 1.0) {
        return Err(Error::param("n", "needs n ε > 1 for log(nε) > 0"));
    }
    let bound = check_step2_bound(n, eps)?.value;
    let ne = n as f64 * eps;
    let l = bound * ne / ne.ln();
    let rhs = a0 + (n as f64).powf(-a0) * (l / eps * ne.ln() + delta_abs);
    Ok(CheckReport::new(
        "step3_chain",
        json!({ "n": n, "epsilon": eps, "a0": a0, "delta_abs": delta_abs, "measured_l": l }),
        a,
        rhs,
        a <= rhs,
    ))
}

/// Twenty-four convex pairs: elementary functions plus log-partition functions
/// `x ↦ log Σ_a w_a e^{x h_a}` against averages of such functions.
pub fn convex_corpus() -> Vec<ScalarFunctionPair<f64>> {
    let square = || ScalarFn::new("x^2", |x: f64| x * x).with_derivative(|x| 2.0 * x);
    let half_square = || ScalarFn::new("x^2/2", |x: f64| 0.5 * x * x).with_derivative(|x| x);
    let shifted = || ScalarFn::new("x^2+1", |x: f64| x * x + 1.0).with_derivative(|x| 2.0 * x);
    let smooth_abs = || ScalarFn::new("sqrt(x^2+1e-4)", |x: f64| (x * x + 1e-4).sqrt());
    let exp = || ScalarFn::new("exp(x)", f64::exp).with_derivative(f64::exp);
    let exp_neg = || ScalarFn::new("exp(-x)", |x: f64| (-x).exp()).with_derivative(|x: f64| -(-x).exp());
    let softplus = || ScalarFn::new("log(1+e^x)", |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p());
    let cosh = || ScalarFn::new("cosh(x)", f64::cosh).with_derivative(f64::sinh);
    let quartic = || ScalarFn::new("x^4", |x: f64| x.powi(4)).with_derivative(|x| 4.0 * x.powi(3));
    let abs_cubed = || ScalarFn::new("|x|^3", |x: f64| x.abs().powi(3)).with_derivative(|x| 3.0 * x * x.abs());
    let linear = || ScalarFn::new("0.3x-1", |x: f64| 0.3 * x - 1.0).with_derivative(|_| 0.3);
    let affine_sq = || ScalarFn::new("(x-0.5)^2+0.1x", |x: f64| (x - 0.5).powi(2) + 0.1 * x);

    let log_partition = |name: &str, weights: Vec<f64>, h: Vec<f64>| {
        let (w2, h2) = (weights.clone(), h.clone());
        ScalarFn::new(name, move |x: f64| {
            let terms: Vec<f64> = weights.iter().zip(&h).map(|(w, hv)| w.ln() + x * hv).collect();
            crate::real::log_sum_exp(&terms)
        })
        .with_derivative(move |x: f64| {
            let terms: Vec<f64> = w2.iter().zip(&h2).map(|(w, hv)| w.ln() + x * hv).collect();
            let z = crate::real::log_sum_exp(&terms);
            terms.iter().zip(&h2).map(|(t, hv)| (t - z).exp() * hv).sum()
        })
    };
    // an "expected" log-partition function: the average of several draws
    let averaged = |name: &str, draws: Vec<Vec<f64>>| {
        let d2 = draws.clone();
        let lp = move |x: f64, h: &Vec<f64>| {
            let terms: Vec<f64> = h.iter().map(|hv| (0.25f64).ln() + x * hv).collect();
            crate::real::log_sum_exp(&terms)
        };
        let lp2 = lp;
        ScalarFn::new(name, move |x: f64| draws.iter().map(|h| lp(x, h)).sum::<f64>() / draws.len() as f64)
            .with_derivative(move |x: f64| {
                let h_ = 1e-6;
                d2.iter().map(|h| (lp2(x + h_, h) - lp2(x - h_, h)) / (2.0 * h_)).sum::<f64>() / d2.len() as f64
            })
    };
    let theta_a = || log_partition("theta_a", vec![0.25; 4], vec![0.8, -1.1, 0.3, 1.7]);
    let theta_b = || log_partition("theta_b", vec![0.1, 0.6, 0.3], vec![-2.0, 0.5, 1.0]);
    let psi_a = || {
        averaged(
            "psi_a",
            vec![
                vec![0.8, -1.1, 0.3, 1.7],
                vec![-0.2, 0.9, 1.4, -0.6],
                vec![1.2, 0.1, -1.5, 0.4],
                vec![0.0, -0.7, 0.6, 1.1],
            ],
        )
    };

    let pairs = vec![
        (square(), square()),
        (square(), shifted()),
        (smooth_abs(), half_square()),
        (half_square(), smooth_abs()),
        (exp(), square()),
        (exp(), cosh()),
        (exp_neg(), exp()),
        (softplus(), half_square()),
        (softplus(), smooth_abs()),
        (cosh(), half_square()),
        (quartic(), square()),
        (abs_cubed(), quartic()),
        (linear(), square()),
        (square(), linear()),
        (affine_sq(), square()),
        (exp(), softplus()),
        (theta_a(), psi_a()),
        (psi_a(), theta_a()),
        (theta_b(), psi_a()),
        (theta_a(), theta_b()),
        (theta_b(), half_square()),
        (smooth_abs(), theta_a()),
        (cosh(), quartic()),
        (abs_cubed(), exp_neg()),
    ];
    pairs.into_iter().map(|(t, p)| ScalarFunctionPair::new(t, p)).collect()
}
