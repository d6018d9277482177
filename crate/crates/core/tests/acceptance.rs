//! Acceptance criteria, one line each. Exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use positivity_core::estimators::{
    estimate_concentration, estimate_gg_residual, estimate_lemma1, estimate_positivity, find_good_perturbation,
    Replication, TestFunction,
};
use positivity_core::field::{sample_field_tensor, xi, Backend, CovarianceSampler, FieldSpec};
use positivity_core::generators::{antipodal, antipodal_on_axis, point_mass, random};
use positivity_core::sphere::{product_probability_exact, DiscreteMeasure, OverlapMatrix, ReplicaPredicate, UnitVector};
use positivity_core::suite::random_measures;
use positivity_core::sweep::{run_sweep, SweepConfig, RESULTS_FILE};
use positivity_core::verification::{
    check_convexity_lemma, check_gu_bound, check_induction_bound, check_mean_overlap_identity, check_pos1,
    convex_corpus,
};
use positivity_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict {
        pass,
        detail: detail.into(),
    })
}

const FULL: Replication = Replication {
    x_draws: 64,
    field_draws: 256,
};

fn criterion_1() -> Result<Verdict> {
    let m = antipodal::<f64>(2)?;
    let r = estimate_positivity(&m, &FieldSpec::new(0.0), 0.5, FULL, 1)?;
    let exact = product_probability_exact(&m, &ReplicaPredicate::overlap_leq(2, 0, 1, 0.5)?)?;
    verdict(
        (r.mean - exact).abs() <= 1e-12 && (r.mean - 0.5).abs() <= 1e-12 && r.stderr == 0.0,
        format!("mean {} stderr {} enumeration {exact}", r.mean, r.stderr),
    )
}

fn criterion_2() -> Result<Verdict> {
    let m = antipodal::<f64>(8)?;
    let spec = FieldSpec::new(0.0).with_p_max(12);
    let at0 = estimate_positivity(&m, &spec, 0.2, FULL, 2)?;
    let at20 = estimate_positivity(&m, &spec.with_v(20.0), 0.2, FULL, 2)?;
    let combined = (at0.stderr.powi(2) + at20.stderr.powi(2)).sqrt();
    let drop = at0.mean - at20.mean;
    verdict(
        drop > 5.0 * combined && at20.mean + 3.0 * at20.stderr < 0.2,
        format!(
            "v=0 {:.4}; v=20 {:.4} ± {:.4}; drop {:.4} vs 5se {:.4}",
            at0.mean,
            at20.mean,
            at20.stderr,
            drop,
            5.0 * combined
        ),
    )
}

fn criterion_3() -> Result<Verdict> {
    let m = antipodal::<f64>(8)?;
    let psi = TestFunction::Monomial { p: 1 };
    let f2 = ReplicaPredicate::overlap_leq(2, 0, 1, 0.5)?;
    let spec = FieldSpec::new(1.0);
    let at1 = estimate_gg_residual(&m, &spec, &f2, &psi, FULL, 3)?.report;
    let at20 = estimate_gg_residual(&m, &spec.with_v(20.0), &f2, &psi, FULL, 3)?.report;
    let combined = (at1.stderr.powi(2) + at20.stderr.powi(2)).sqrt();
    let decays = at1.mean - at20.mean > 3.0 * combined;
    let one = ReplicaPredicate::constant(1, 1.0)?;
    let mut worst = 0.0f64;
    let mut trivial_ok = true;
    for v in [0.0, 1.0, 5.0, 20.0] {
        let r = estimate_gg_residual(&m, &spec.with_v(v), &one, &psi, FULL, 4)?.report;
        // floating-point residue of an identity that cancels exactly in real arithmetic
        trivial_ok &= r.mean <= 3.0 * r.stderr + 1e-12;
        worst = worst.max(r.mean);
    }
    verdict(
        decays && trivial_ok,
        format!(
            "v=1 {:.4} ± {:.4}; v=20 {:.4} ± {:.4}; n=1 residual max {worst:.2e}",
            at1.mean, at1.stderr, at20.mean, at20.stderr
        ),
    )
}

fn criterion_4() -> Result<Verdict> {
    let m = antipodal::<f64>(8)?;
    let mut ratios = Vec::new();
    for v in [1.0f64, 4.0, 16.0, 64.0] {
        let r = estimate_lemma1(&m, &FieldSpec::new(v), 1, FULL, 5)?;
        ratios.push((v, r.mean / v.sqrt(), r.stderr / v.sqrt()));
    }
    let max = ratios.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let (_, r1, _) = ratios[0];
    let bounded = ratios.iter().all(|&(_, r, se)| r <= 2.0 * r1 + 3.0 * se);
    let listing: Vec<String> = ratios.iter().map(|(v, r, se)| format!("v={v}: {r:.4}±{se:.4}")).collect();
    verdict(
        max / min <= 10.0 && bounded,
        format!("ratio/√v {}; max/min {:.2}; below 2×(v=1)+3se: {bounded}", listing.join(", "), max / min),
    )
}

fn criterion_5() -> Result<Verdict> {
    let reps = Replication::new(2, 10_000);
    let mut worst = 0.0f64;
    let mut ok = true;
    for i in 0..10u64 {
        let m = random::<f64>(2 + (i as usize % 7), 4 + (i as usize * 5) % 13, 100 + i)?;
        for v in [1.0, 5.0] {
            let spec = FieldSpec::new(v);
            let est = estimate_concentration(&m, &spec, reps, 50 + i)?;
            for s in &est.samples {
                let x_bound = 8.0 * v * v * xi(1.0, &[1.0; 12], 12)?;
                ok &= s.variance <= s.bound * 1.1 && s.variance <= x_bound * 1.1;
                worst = worst.max(s.variance / s.bound);
            }
        }
    }
    let pm = point_mass::<f64>(4)?;
    let mut point_ok = true;
    let mut point_ratio = Vec::new();
    for v in [1.0, 5.0] {
        let est = estimate_concentration(&pm, &FieldSpec::new(v), reps, 60)?;
        for s in &est.samples {
            let r = s.variance / s.a;
            point_ok &= (r - 1.0).abs() <= 0.05;
            point_ratio.push(format!("{r:.4}"));
        }
    }
    verdict(
        ok && point_ok,
        format!("max variance/8a {worst:.4}; point mass variance/a {}", point_ratio.join(" ")),
    )
}

fn criterion_6() -> Result<Verdict> {
    let mut failures = Vec::new();
    let corpus = convex_corpus();
    let mut convexity = 0;
    for pair in &corpus {
        for i in 0..50 {
            let x = -2.0 + 4.0 * i as f64 / 49.0;
            let y = 0.1 + 0.9 * ((i * 7) % 50) as f64 / 49.0;
            convexity += 1;
            if !check_convexity_lemma(pair, x, y)?.pass {
                failures.push(format!("convexity {} at {x}", pair.label()));
            }
        }
    }
    for (i, m) in random_measures(50, 6001).iter().enumerate() {
        let (n, eps, gamma) = (2 + i % 4, 0.05 + 0.018 * i as f64, 0.98 - 0.019 * i as f64);
        if !check_gu_bound(m, n, eps, gamma)?.pass() {
            failures.push(format!("gu instance {i}"));
        }
    }
    let mut grid = 0;
    for i in 0..100 {
        for n in 3..103 {
            grid += 1;
            let a = i as f64 / 99.0;
            if !check_induction_bound(a, n)?.factors_hold {
                failures.push(format!("induction a={a} n={n}"));
            }
        }
    }
    for (i, m) in random_measures(100, 6002).iter().enumerate() {
        if !check_mean_overlap_identity(m)?.pass {
            failures.push(format!("mean overlap {i}"));
        }
        if !check_pos1(m, 0.01 + 0.0098 * i as f64)?.pass {
            failures.push(format!("pos1 {i}"));
        }
    }
    verdict(
        failures.is_empty() && corpus.len() >= 20,
        format!(
            "{} pairs × 50 probes ({convexity}), 50 GU, {grid} induction, 100+100 measures; failures {:?}",
            corpus.len(),
            failures
        ),
    )
}

fn criterion_7() -> Result<Verdict> {
    // three tightly clustered directions in R^3: all covariance entries well above 0.01
    let support = vec![
        UnitVector::new(vec![1.0, 0.0, 0.0])?,
        UnitVector::new(vec![1.0, 0.3, 0.0])?,
        UnitVector::new(vec![1.0, 0.1, 0.3])?,
    ];
    let spec = FieldSpec::new(1.0).with_p_max(3);
    let x = [1.0, 1.0, 1.0];
    let overlaps = OverlapMatrix::from_points(&support)?;
    let draws = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cov = CovarianceSampler::new(&overlaps, &spec, &x)?;
    let a: Vec<Vec<f64>> = (0..draws).map(|_| cov.sample(&mut rng)).collect();
    let tensor_spec = spec.with_backend(Backend::Tensor);
    let b: Vec<Vec<f64>> = (0..draws)
        .map(|_| sample_field_tensor(3, &support, &tensor_spec, &x, &mut rng).map(|r| r.field_values().to_vec()))
        .collect::<Result<_>>()?;
    let empirical = |s: &[Vec<f64>], i: usize, j: usize| {
        let n = s.len() as f64;
        let (mi, mj) = (s.iter().map(|r| r[i]).sum::<f64>() / n, s.iter().map(|r| r[j]).sum::<f64>() / n);
        s.iter().map(|r| (r[i] - mi) * (r[j] - mj)).sum::<f64>() / (n - 1.0)
    };
    let mut worst = 0.0f64;
    let mut compared = 0;
    for i in 0..3 {
        for j in i..3 {
            let analytic = xi(overlaps.get(i, j), &x, 3)?;
            if analytic.abs() < 0.01 {
                continue;
            }
            compared += 1;
            let (ca, cb) = (empirical(&a, i, j), empirical(&b, i, j));
            worst = worst
                .max((ca - cb).abs() / analytic.abs())
                .max((ca - analytic).abs() / analytic.abs())
                .max((cb - analytic).abs() / analytic.abs());
        }
    }
    verdict(worst <= 0.05, format!("{compared} entries, worst relative gap {worst:.4}"))
}

fn criterion_8() -> Result<Verdict> {
    let family: Vec<DiscreteMeasure<f64>> = vec![antipodal_on_axis(8, 0)?, antipodal_on_axis(8, 1)?];
    let spec = FieldSpec::new(20.0);
    let mut found = 0;
    let mut attempts = Vec::new();
    for seed in 0..10 {
        match find_good_perturbation(&family, &spec, 0.2, 200, 3.0, 800 + seed)? {
            positivity_core::PerturbationSearch::Found(c) => {
                found += 1;
                attempts.push(c.attempt);
            }
            positivity_core::PerturbationSearch::Exhausted { .. } => attempts.push(0),
        }
    }
    verdict(found >= 9, format!("{found}/10 found; attempts {attempts:?}"))
}

fn criterion_9() -> Result<Verdict> {
    let config = SweepConfig::parse(
        r#"{
  "measure": { "generator": "simplex", "dim": 3 },
  "v_grid": [0, 1, 5, 20],
  "epsilon_grid": [0.2, 0.5],
  "n_grid": [1, 2, 3],
  "estimators": ["positivity", "gg_residual", "fn", "lemma1", "concentration"],
  "reps": 8,
  "field_draws": 128,
  "seed": 99
}"#,
    )
    .map_err(|e| positivity_core::Error::Format(e.to_string()))?;
    let dirs = (tempfile::tempdir()?, tempfile::tempdir()?);
    run_sweep(&config, dirs.0.path())?;
    let mut threaded = config.clone();
    threaded.workers = Some(2);
    run_sweep(&threaded, dirs.1.path())?;
    let a = std::fs::read(dirs.0.path().join(RESULTS_FILE))?;
    let b = std::fs::read(dirs.1.path().join(RESULTS_FILE))?;
    verdict(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

type Criterion = fn() -> Result<Verdict>;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion, u64); 9] = [
        ("v=0 exactness", criterion_1, 1),
        ("positivity trend", criterion_2, 600),
        ("GG residual decay", criterion_3, 600),
        ("Lemma 1 scaling", criterion_4, 600),
        ("concentration", criterion_5, 300),
        ("deterministic inequality suite", criterion_6, 60),
        ("backend equivalence", criterion_7, 120),
        ("witness search", criterion_8, 900),
        ("reproducibility", criterion_9, 60),
    ];
    let mut failed = Vec::new();
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = run();
        let elapsed = started.elapsed();
        let in_time = elapsed <= Duration::from_secs(*limit);
        let (pass, detail) = match outcome {
            Ok(v) => (v.pass && in_time, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {} {name}: {} ({detail}; {:.2}s of {limit}s)",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
