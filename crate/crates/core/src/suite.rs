//! Named collection of pass/fail checks with a deterministic text summary.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::estimators::{
    estimate_concentration, estimate_fn, estimate_gg_residual, estimate_positivity, estimate_sup_scaling, fn_exact,
    Replication, TestFunction,
};
use crate::field::FieldSpec;
use crate::generators::{antipodal, random_with, simplex};
use crate::sphere::{DiscreteMeasure, ReplicaPredicate};
use crate::verification::{
    check_convexity_lemma, check_fn_below_step2, check_gu_bound, check_induction_bound, check_mean_overlap_identity,
    check_pos1, check_step2_bound, check_step3_chain, convex_corpus, step2_objective,
};

/// What a single check found.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub pass: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type CheckFn = Box<dyn Fn() -> Result<CheckOutcome> + Send + Sync>;

struct NamedCheck {
    name: String,
    run: CheckFn,
}

#[derive(Default)]
pub struct VerificationSuite {
    checks: Vec<NamedCheck>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LineStatus {
    Pass,
    Fail,
    /// The check refused its inputs.
    Error(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteLine {
    pub name: String,
    pub status: LineStatus,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteSummary {
    pub lines: Vec<SuiteLine>,
}

impl SuiteSummary {
    pub fn all_pass(&self) -> bool {
        self.lines.iter().all(|l| l.status == LineStatus::Pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.lines
            .iter()
            .filter(|l| l.status != LineStatus::Pass)
            .map(|l| l.name.as_str())
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            let _ = match &line.status {
                LineStatus::Pass => writeln!(out, "PASS  {}  {}", line.name, line.detail),
                LineStatus::Fail => writeln!(out, "FAIL  {}  {}", line.name, line.detail),
                LineStatus::Error(e) => writeln!(out, "ERROR {}  {}", line.name, e),
            };
        }
        let failed = self.failures();
        let _ = if failed.is_empty() {
            writeln!(out, "{} checks, all passed", self.lines.len())
        } else {
            writeln!(out, "{} checks, {} failed: {}", self.lines.len(), failed.len(), failed.join(", "))
        };
        out
    }
}

impl VerificationSuite {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, run: impl Fn() -> Result<CheckOutcome> + Send + Sync + 'static) {
        self.checks.push(NamedCheck {
            name: name.into(),
            run: Box::new(run),
        });
    }

    pub fn len(&self) -> usize {
        self.checks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checks.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.checks.iter().map(|c| c.name.as_str()).collect()
    }

    /// Runs the checks in insertion order.
    pub fn run(&self) -> SuiteSummary {
        let lines = self
            .checks
            .iter()
            .map(|c| match (c.run)() {
                Ok(o) => SuiteLine {
                    name: c.name.clone(),
                    status: if o.pass { LineStatus::Pass } else { LineStatus::Fail },
                    detail: o.detail,
                },
                Err(e) => SuiteLine {
                    name: c.name.clone(),
                    status: LineStatus::Error(e.to_string()),
                    detail: String::new(),
                },
            })
            .collect();
        SuiteSummary { lines }
    }

    /// Deterministic inequality checks followed by the `v = 0` exactness checks.
    pub fn standard(seed: u64) -> Self {
        let mut suite = Self::new();
        add_inequality_checks(&mut suite, seed);
        add_exactness_checks(&mut suite, seed);
        suite
    }
}

/// `count` random measures with `dim <= 8` and at most 16 atoms.
pub fn random_measures(count: usize, seed: u64) -> Vec<DiscreteMeasure<f64>> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let dim = rng.random_range(1..=8);
            let atoms = rng.random_range(1..=16);
            random_with(dim, atoms, &mut rng).expect("positive sizes")
        })
        .collect()
}

fn count_failures<I: IntoIterator<Item = Result<bool>>>(items: I) -> Result<(usize, usize)> {
    let mut total = 0;
    let mut failed = 0;
    for item in items {
        total += 1;
        if !item? {
            failed += 1;
        }
    }
    Ok((total, failed))
}

fn tally(label: &str, (total, failed): (usize, usize)) -> CheckOutcome {
    CheckOutcome::new(failed == 0, format!("{total} {label}, {failed} failed"))
}

fn add_inequality_checks(suite: &mut VerificationSuite, seed: u64) {
    suite.push("convexity_lemma", || {
        let corpus = convex_corpus();
        let probes = (0..50).map(|i| (-2.0 + 4.0 * i as f64 / 49.0, 0.25 + 0.5 * (i % 4) as f64 / 3.0));
        let probes: Vec<(f64, f64)> = probes.collect();
        let counts = count_failures(
            corpus
                .iter()
                .flat_map(|pair| probes.iter().map(move |&(x, y)| check_convexity_lemma(pair, x, y).map(|r| r.pass))),
        )?;
        Ok(tally("pair-probe evaluations", counts))
    });
    suite.push("gu_bound", move || {
        let measures = random_measures(50, seed ^ 0x6755);
        let counts = count_failures(measures.iter().enumerate().map(|(i, m)| {
            let n = 2 + i % 4;
            let eps = 0.05 + 0.9 * ((i * 7) % 50) as f64 / 50.0;
            let gamma = 0.05 + 0.9 * ((i * 13) % 50) as f64 / 50.0;
            check_gu_bound(m, n, eps, gamma).map(|r| r.pass())
        }))?;
        Ok(tally("random instances", counts))
    });
    suite.push("pos1", move || {
        let measures = random_measures(100, seed ^ 0x9051);
        let counts = count_failures(
            measures
                .iter()
                .enumerate()
                .map(|(i, m)| check_pos1(m, 0.01 + 0.98 * i as f64 / 99.0).map(|r| r.pass)),
        )?;
        Ok(tally("random measures", counts))
    });
    suite.push("mean_overlap_identity", move || {
        let measures = random_measures(100, seed ^ 0x3e4a);
        let counts = count_failures(measures.iter().map(|m| check_mean_overlap_identity(m).map(|r| r.pass)))?;
        Ok(tally("random measures", counts))
    });
    suite.push("induction_bound", || {
        let counts = count_failures((0..100).flat_map(|i| {
            let a = i as f64 / 99.0;
            (3..103).map(move |n| check_induction_bound(a, n).map(|r| r.factors_hold))
        }))?;
        Ok(tally("grid points", counts))
    });
    suite.push("step2_minimum", || {
        let mut worst: f64 = 0.0;
        for n in [2, 3, 10, 100, 1000] {
            for eps in [0.01, 0.1, 0.5, 0.9] {
                let r = check_step2_bound(n, eps)?;
                let scan = (0..=10_000)
                    .map(|k| step2_objective(n, eps, k as f64 / 10_000.0))
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(r.value - scan);
            }
        }
        Ok(CheckOutcome::new(worst <= 1e-9, format!("largest excess over grid scan {worst:.3e}")))
    });
    suite.push("fn_below_step2", move || {
        let measures = random_measures(50, seed ^ 0x5702);
        let counts = count_failures(
            measures
                .iter()
                .enumerate()
                .map(|(i, m)| check_fn_below_step2(m, 2 + i % 5, 0.1 + 0.8 * (i % 9) as f64 / 8.0).map(|r| r.pass)),
        )?;
        Ok(tally("random instances", counts))
    });
    suite.push("step3_chain", || {
        let counts = count_failures(
            [(0.1, 50, 0.2), (0.3, 100, 0.1), (0.02, 1000, 0.05)]
                .into_iter()
                .map(|(a, n, eps)| check_step3_chain(a, n, eps, 0.05, 0.0).map(|r| r.pass)),
        )?;
        Ok(tally("instances", counts))
    });
}

fn add_exactness_checks(suite: &mut VerificationSuite, seed: u64) {
    let reps = Replication::new(4, 16);
    let zero = || FieldSpec::<f64>::new(0.0);
    suite.push("v0_positivity", move || {
        let r = estimate_positivity(&antipodal::<f64>(4)?, &zero(), 0.5, reps, seed)?;
        Ok(CheckOutcome::new(
            (r.mean - 0.5).abs() <= 1e-12 && r.stderr == 0.0,
            format!("mean {} stderr {}", r.mean, r.stderr),
        ))
    });
    suite.push("v0_fn", move || {
        let m = simplex::<f64>(3)?;
        let exact = fn_exact(m.weights(), &m.overlaps()?, 3, 0.2);
        let r = estimate_fn(&m, &zero(), 3, 0.2, reps, seed)?;
        Ok(CheckOutcome::new(
            (r.mean - exact).abs() <= 1e-12 && r.stderr == 0.0,
            format!("mean {} exact {} stderr {}", r.mean, exact, r.stderr),
        ))
    });
    suite.push("v0_gg_residual", move || {
        let f = ReplicaPredicate::overlap_leq(2, 0, 1, 0.5)?;
        let g = estimate_gg_residual(&antipodal::<f64>(4)?, &zero(), &f, &TestFunction::Monomial { p: 1 }, reps, seed)?;
        let r = g.report;
        Ok(CheckOutcome::new(
            (r.mean - 0.25).abs() <= 1e-12 && r.stderr == 0.0,
            format!("mean {} stderr {}", r.mean, r.stderr),
        ))
    });
    suite.push("v0_concentration", move || {
        let m = random_measures(1, seed ^ 0x77)[0].clone();
        let r = estimate_concentration(&m, &zero(), Replication::new(3, 100), seed)?;
        Ok(CheckOutcome::new(
            r.report.mean == 0.0 && r.report.stderr == 0.0,
            format!("variance {}", r.report.mean),
        ))
    });
    suite.push("v0_sup", move || {
        let s = estimate_sup_scaling(&simplex::<f64>(3)?, &[0.0, 1.0, 2.0], &zero(), reps, seed)?;
        Ok(CheckOutcome::new(
            s.rows[0].mean_sup == 0.0 && s.linear_exact,
            format!("sup at v=0 {} linear {}", s.rows[0].mean_sup, s.linear_exact),
        ))
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn standard_suite_passes_and_is_deterministic() {
        let a = VerificationSuite::standard(3).run();
        assert!(a.all_pass(), "{}", a.render());
        let b = VerificationSuite::standard(3).run();
        assert_eq!(a.render(), b.render());
    }

    #[test]
    fn corrupted_check_is_reported() {
        let mut suite = VerificationSuite::new();
        suite.push("induction_bound_corrupted", || {
            check_induction_bound(1.5, 10).map(|r| CheckOutcome::new(r.factors_hold, ""))
        });
        suite.push("always_fails", || Ok(CheckOutcome::new(false, "forced")));
        suite.push("always_errors", || Err(Error::EmptyMeasure));
        let summary = suite.run();
        assert!(!summary.all_pass());
        assert_eq!(summary.failures(), vec!["induction_bound_corrupted", "always_fails", "always_errors"]);
        let text = summary.render();
        assert!(text.contains("ERROR induction_bound_corrupted"));
        assert!(text.lines().last().unwrap().contains("3 failed"));
    }
}
