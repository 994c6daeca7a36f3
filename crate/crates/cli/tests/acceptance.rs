//! Acceptance suite: twelve numbered release criteria, each reported as a
//! single PASS/FAIL line with its runtime. The suite runs end to end even
//! when an early criterion fails, so a broken build still prints the full
//! scoreboard. Run with `-- --nocapture` to see the lines on success.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use oodfuse::center_outward::{
    center_outward_fit, hull_member, monotone_hull_extend, sinkhorn, CenterOutwardParams,
    CenterOutwardVariant,
};
use oodfuse::combine::{CombinerSpec, VoteRule};
use oodfuse::copula::{
    copula_cdf, fit_copula, kendall_tau, normal_correlation_from_tau, CopulaFamily, CopulaFit,
    MarginalFamily,
};
use oodfuse::mat::Mat;
use oodfuse::metrics::{auroc_scalar, family_roc, uniform_grid};
use oodfuse::rng::SplitMix64;
use oodfuse::score_data::{split_id, split_ood, ScoreMatrix, SplitSpec, ID_ORIGIN};
use oodfuse::search::{beam_search, eval_subset, sensitivity_search, EvalRecord};
use oodfuse::synth::{
    brute_force_auroc, brute_force_hull_member, gen_gaussian_scores, GaussianScoreSpec,
};
use oodfuse::CombinerSpec64;

type Matrix = ScoreMatrix<f64>;

// ---------------------------------------------------------------------------
// Harness

struct Outcome {
    label: &'static str,
    passed: bool,
    elapsed: Duration,
    detail: String,
}

fn run_criterion(
    index: usize,
    label: &'static str,
    budget: Option<Duration>,
    check: impl FnOnce() -> String,
) -> Outcome {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(check));
    let elapsed = start.elapsed();
    let (mut passed, detail) = match result {
        Ok(detail) => (true, detail),
        Err(payload) => {
            let message = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic without message".to_string());
            (false, message)
        }
    };
    let mut detail = detail;
    if let Some(limit) = budget {
        if elapsed > limit {
            passed = false;
            detail = format!(
                "over budget: took {:.1}s, limit {:.0}s ({detail})",
                elapsed.as_secs_f64(),
                limit.as_secs_f64()
            );
        }
    }
    let verdict = if passed { "PASS" } else { "FAIL" };
    println!(
        "[{index:2}/12] {verdict} {:7.2}s  {label}: {detail}",
        elapsed.as_secs_f64()
    );
    Outcome {
        label,
        passed,
        elapsed,
        detail,
    }
}

#[test]
fn acceptance() {
    let secs = Duration::from_secs;
    let outcomes = vec![
        run_criterion(1, "auroc oracle equivalence", Some(secs(1)), c01_auroc_oracle),
        run_criterion(2, "copula axioms", Some(secs(10)), c02_copula_axioms),
        run_criterion(3, "gumbel tau inversion", None, c03_tau_inversion),
        run_criterion(4, "sinkhorn marginals", Some(secs(30)), c04_sinkhorn_marginals),
        run_criterion(
            5,
            "center-outward calibration",
            Some(secs(60)),
            c05_center_outward_calibration,
        ),
        run_criterion(6, "monotone hull closure", None, c06_hull_closure),
        run_criterion(
            7,
            "region nesting and score monotonicity",
            None,
            c07_nesting_and_monotonicity,
        ),
        run_criterion(8, "scalar-reduction consistency", None, c08_scalar_reduction),
        run_criterion(9, "beam-search contract", None, c09_beam_contract),
        run_criterion(10, "sensitivity correctness", None, c10_sensitivity),
        run_criterion(11, "combination gain", Some(secs(120)), c11_combination_gain),
        run_criterion(12, "end-to-end cli", None, c12_end_to_end_cli),
    ];
    let total: f64 = outcomes.iter().map(|o| o.elapsed.as_secs_f64()).sum();
    println!("acceptance total {total:.1}s");
    let failures: Vec<&Outcome> = outcomes.iter().filter(|o| !o.passed).collect();
    assert!(
        failures.is_empty(),
        "{} criteria failed: {}",
        failures.len(),
        failures
            .iter()
            .map(|o| format!("{} ({})", o.label, o.detail))
            .collect::<Vec<_>>()
            .join("; ")
    );
}

// ---------------------------------------------------------------------------
// Shared builders

fn matrix_from_rows(rows: &[Vec<f64>], origin: &str) -> Matrix {
    let d = rows[0].len();
    let names = (1..=d).map(|i| format!("s{i}")).collect();
    let ids = (0..rows.len()).map(|i| format!("{origin}_{i}")).collect();
    let origins = vec![origin.to_string(); rows.len()];
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    Matrix::new(names, ids, origins, Mat::from_vec(rows.len(), d, data)).unwrap()
}

fn uniform_rows(rng: &mut SplitMix64, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.next_f64()).collect())
        .collect()
}

fn normal_rows(rng: &mut SplitMix64, n: usize, d: usize, shift: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.next_standard_normal() + shift).collect())
        .collect()
}

fn identity_correlation(d: usize) -> Vec<Vec<f64>> {
    let mut corr = vec![vec![0.0; d]; d];
    for (i, row) in corr.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    corr
}

// ---------------------------------------------------------------------------
// 1. metrics.auroc_scalar equals the quadratic pair-counting oracle to 1e-12
//    on 200 random instances with n, m <= 50, ties included.

fn c01_auroc_oracle() -> String {
    let mut rng = SplitMix64::new(0xACC0101);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = 1 + rng.next_below(50) as usize;
        let m = 1 + rng.next_below(50) as usize;
        // Half the cases draw from a coarse lattice so ties occur within
        // and across the two samples.
        let lattice = case % 2 == 0;
        let mut draw = |k: usize| -> Vec<f64> {
            (0..k)
                .map(|_| {
                    if lattice {
                        rng.next_below(8) as f64 / 4.0
                    } else {
                        rng.next_f64()
                    }
                })
                .collect()
        };
        let id = draw(n);
        let ood = draw(m);
        let fast = auroc_scalar(&id, &ood).unwrap();
        let slow = brute_force_auroc(&id, &ood).unwrap();
        let diff = (fast - slow).abs();
        assert!(diff <= 1e-12, "case {case}: {fast} vs {slow}");
        worst = worst.max(diff);
    }
    format!("200 instances, worst |difference| {worst:.1e}")
}

// ---------------------------------------------------------------------------
// 2. Margin property, Frechet bounds, and the 2-increasing rectangle
//    inequality hold for every family across 50 fitted parameters.

fn c02_copula_axioms() -> String {
    let families = [
        CopulaFamily::Independent,
        CopulaFamily::Frank,
        CopulaFamily::Clayton,
        CopulaFamily::Gumbel,
        CopulaFamily::Plackett,
        CopulaFamily::Normal,
    ];
    let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let mut rng = SplitMix64::new(0xACC0202);
    let mut fits = 0usize;
    for family in families {
        for rep in 0..50 {
            // Pseudo-observations from a bivariate Gaussian with a fresh
            // dependence strength each repetition.
            let rho = 0.85 * rep as f64 / 49.0;
            let n = 60;
            let mut data = Vec::with_capacity(2 * n);
            for _ in 0..n {
                let z1 = rng.next_standard_normal();
                let z2 = rho * z1 + (1.0 - rho * rho).sqrt() * rng.next_standard_normal();
                data.push(oodfuse::special::norm_cdf(z1));
                data.push(oodfuse::special::norm_cdf(z2));
            }
            let pseudo = Mat::from_vec(n, 2, data);
            let fit = fit_copula(&pseudo, family).unwrap();
            fits += 1;

            let mut table = vec![vec![0.0f64; grid.len()]; grid.len()];
            for (i, &u) in grid.iter().enumerate() {
                for (j, &v) in grid.iter().enumerate() {
                    table[i][j] = copula_cdf(&fit, &[u, v]).unwrap();
                }
            }
            for (i, &u) in grid.iter().enumerate() {
                assert!(
                    (table[i][20] - u).abs() <= 1e-9,
                    "{family:?} margin C(u,1): u={u}"
                );
                assert!(
                    (table[20][i] - u).abs() <= 1e-9,
                    "{family:?} margin C(1,u): u={u}"
                );
            }
            for (i, &u) in grid.iter().enumerate() {
                for (j, &v) in grid.iter().enumerate() {
                    let c = table[i][j];
                    let lower = (u + v - 1.0).max(0.0);
                    let upper = u.min(v);
                    assert!(
                        c >= lower - 1e-9 && c <= upper + 1e-9,
                        "{family:?} Frechet at ({u},{v}): {c}"
                    );
                }
            }
            for i in 0..20 {
                for j in 0..20 {
                    let volume =
                        table[i + 1][j + 1] - table[i][j + 1] - table[i + 1][j] + table[i][j];
                    assert!(
                        volume >= -1e-9,
                        "{family:?} rectangle ({},{}) volume {volume}",
                        grid[i],
                        grid[j]
                    );
                }
            }
        }
    }
    format!("{fits} fits x 441 grid points hold all three axioms")
}

// ---------------------------------------------------------------------------
// 3. Closed-form Kendall inversions: tau = 0.5 maps to Gumbel theta = 2
//    exactly, and sin(pi tau / 2) hits 0, sqrt(2)/2, 1.

fn c03_tau_inversion() -> String {
    // A permutation of 8 distinct values with exactly 7 inversions gives
    // (21 - 7) / 28 = 0.5 without rounding.
    let x: Vec<f64> = (1..=8).map(f64::from).collect();
    let y = [4.0, 3.0, 2.0, 1.0, 6.0, 5.0, 7.0, 8.0];
    let tau = kendall_tau(&x, &y).unwrap();
    assert_eq!(tau, 0.5, "constructed sample tau");

    let mut data = Vec::with_capacity(16);
    for i in 0..8 {
        data.push(x[i] / 9.0);
        data.push(y[i] / 9.0);
    }
    let fit = fit_copula(&Mat::from_vec(8, 2, data), CopulaFamily::Gumbel).unwrap();
    match fit {
        CopulaFit::Gumbel { theta } => assert_eq!(theta, 2.0, "fitted theta"),
        other => panic!("expected a gumbel fit, got {other:?}"),
    }

    assert_eq!(normal_correlation_from_tau(0.0), 0.0);
    assert!(
        (normal_correlation_from_tau(0.5) - std::f64::consts::FRAC_1_SQRT_2).abs() <= 1e-12
    );
    assert!((normal_correlation_from_tau(1.0) - 1.0).abs() <= 1e-12);
    "tau 0.5 -> theta exactly 2; sin(pi tau/2) exact at 0, 0.5, 1".to_string()
}

// ---------------------------------------------------------------------------
// 4. Sinkhorn reaches 1e-6 L1 marginal residuals on 20 random 50x60
//    problems at epsilon 0.01 with nonnegative plans.

fn c04_sinkhorn_marginals() -> String {
    let mut rng = SplitMix64::new(0xACC0404);
    let (n, m) = (50, 60);
    let mut worst = 0.0f64;
    let mut iters = 0usize;
    for problem in 0..20 {
        let cost = Mat::from_vec(n, m, (0..n * m).map(|_| rng.next_f64()).collect());
        let simplex = |rng: &mut SplitMix64, k: usize| -> Vec<f64> {
            let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.next_f64()).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / total).collect()
        };
        let a = simplex(&mut rng, n);
        let b = simplex(&mut rng, m);
        let plan = sinkhorn(&cost, &a, &b, 0.01, 1e-6, 10_000).unwrap();
        assert!(plan.converged, "problem {problem} did not converge");
        assert!(plan.iterations <= 10_000);
        assert!(
            plan.coupling.data().iter().all(|&v| v.is_finite() && v >= 0.0),
            "problem {problem}: negative or non-finite plan entry"
        );
        // Recompute both residuals from the coupling itself rather than
        // trusting the solver's own diagnostics.
        let mut row_err = 0.0;
        for i in 0..n {
            let mass: f64 = plan.coupling.row(i).iter().sum();
            row_err += (mass - a[i]).abs();
        }
        let mut col_err = 0.0;
        for j in 0..m {
            let mass: f64 = (0..n).map(|i| plan.coupling.get(i, j)).sum();
            col_err += (mass - b[j]).abs();
        }
        let residual = row_err.max(col_err);
        assert!(residual <= 1e-6, "problem {problem}: residual {residual:e}");
        worst = worst.max(residual);
        iters = iters.max(plan.iterations);
    }
    format!("20 problems, worst L1 residual {worst:.1e}, max {iters} iterations")
}

// ---------------------------------------------------------------------------
// 5. Center-outward quantile levels of 2000 uniform points put close to
//    mass Q at or below each level Q.

fn c05_center_outward_calibration() -> String {
    let mut rng = SplitMix64::new(0xACC0505);
    let cal = matrix_from_rows(&uniform_rows(&mut rng, 2000, 2), ID_ORIGIN);
    let model = center_outward_fit(&cal, &CenterOutwardParams::default()).unwrap();
    let q = model.quantiles();
    assert_eq!(q.len(), 2000);
    let mut report = Vec::new();
    for step in 1..=5 {
        let target = 0.2 * step as f64;
        let frac = q.iter().filter(|&&v| v <= target).count() as f64 / 2000.0;
        assert!(
            (frac - target).abs() <= 0.05,
            "Q={target}: fraction {frac}"
        );
        report.push(format!("{frac:.3}@{target:.1}"));
    }
    format!("uniform mass matches levels: {}", report.join(" "))
}

// ---------------------------------------------------------------------------
// 6. Monotone hull closure: componentwise-smaller points stay inside, and
//    the LP membership matches the geometric oracle on a d=2 grid.

fn c06_hull_closure() -> String {
    let mut rng = SplitMix64::new(0xACC0606);
    for trial in 0..1000 {
        let d = 2 + (trial % 2);
        let cloud: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..d).map(|_| 0.05 + 0.95 * rng.next_f64()).collect())
            .collect();
        let ext = monotone_hull_extend(&cloud).unwrap();
        // A convex combination of two extension vertices is inside by
        // construction; shrinking it toward the origin must stay inside.
        let i = rng.next_below(ext.len() as u64) as usize;
        let j = rng.next_below(ext.len() as u64) as usize;
        let w = rng.next_f64();
        let inside: Vec<f64> = (0..d)
            .map(|c| w * ext[i][c] + (1.0 - w) * ext[j][c])
            .collect();
        let smaller: Vec<f64> = inside.iter().map(|&v| v * rng.next_f64()).collect();
        assert!(
            hull_member(&ext, &inside).unwrap(),
            "trial {trial}: interior point rejected"
        );
        assert!(
            hull_member(&ext, &smaller).unwrap(),
            "trial {trial}: downward closure violated at {smaller:?}"
        );
    }

    let cloud: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..2).map(|_| 0.05 + 0.95 * rng.next_f64()).collect())
        .collect();
    let ext = monotone_hull_extend(&cloud).unwrap();
    let mut inside_count = 0usize;
    for gi in 0..=20 {
        for gj in 0..=20 {
            let x = [gi as f64 * 0.06 - 0.1, gj as f64 * 0.06 - 0.1];
            let lp = hull_member(&ext, &x).unwrap();
            let oracle = brute_force_hull_member(&ext, &x, 0).unwrap();
            assert_eq!(lp, oracle, "grid point {x:?}");
            inside_count += lp as usize;
        }
    }
    format!("1000 closure pairs hold; grid oracle agrees on 441 points ({inside_count} inside)")
}

// ---------------------------------------------------------------------------
// 7. All four combiners produce nested regions in t, and none flips a
//    verdict from anomalous to normal when a coordinate increases.

fn c07_nesting_and_monotonicity() -> String {
    let mut rng = SplitMix64::new(0xACC0707);
    let hull_params = CenterOutwardParams {
        n_reference: Some(240),
        spheres: 40,
        seed: 7,
        variant: CenterOutwardVariant::Hull,
        ..CenterOutwardParams::default()
    };
    let knn_params = CenterOutwardParams {
        n_reference: Some(240),
        spheres: 40,
        seed: 7,
        ..CenterOutwardParams::default()
    };
    let combiners: Vec<(&str, CombinerSpec64)> = vec![
        ("vote", CombinerSpec::Vote { rule: VoteRule::Loose }),
        ("ecdf", CombinerSpec::Ecdf),
        (
            "copula",
            CombinerSpec::Copula {
                marginal: MarginalFamily::Uniform,
                family: None,
            },
        ),
        ("centerout", CombinerSpec::CenterOutward(hull_params)),
    ];
    let ts: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
    for (label, spec) in &combiners {
        let cal = matrix_from_rows(&uniform_rows(&mut rng, 60, 2), ID_ORIGIN);
        let detector = spec.fit(&cal).unwrap();

        // Nesting: the member flag may only switch off as t grows.
        for sample in 0..100 {
            let x = [rng.next_f64() * 1.4 - 0.2, rng.next_f64() * 1.4 - 0.2];
            let flags: Vec<bool> = ts
                .iter()
                .map(|&t| detector.member_at(&x, t).unwrap())
                .collect();
            for w in flags.windows(2) {
                assert!(
                    w[0] || !w[1],
                    "{label} sample {sample}: region grew from one t to the next"
                );
            }
        }

        // Monotonicity: raising one coordinate never flips anomalous to
        // normal.
        for trial in 0..1000 {
            let x = [rng.next_f64() * 1.4 - 0.2, rng.next_f64() * 1.4 - 0.2];
            let t = rng.next_below(11) as f64 / 10.0;
            if !detector.member_at(&x, t).unwrap() {
                continue;
            }
            let mut bumped = x;
            bumped[rng.next_below(2) as usize] += 0.01 + 2.0 * rng.next_f64();
            assert!(
                detector.member_at(&bumped, t).unwrap(),
                "{label} trial {trial}: verdict flipped after raising a coordinate"
            );
        }
    }

    // The KNN center-outward variant is level-based, so its regions nest
    // as well; check that without the monotonicity clause, which only the
    // hull variant guarantees.
    let cal = matrix_from_rows(&uniform_rows(&mut rng, 60, 2), ID_ORIGIN);
    let knn = CombinerSpec::CenterOutward(knn_params).fit(&cal).unwrap();
    for _ in 0..100 {
        let x = [rng.next_f64() * 1.4 - 0.2, rng.next_f64() * 1.4 - 0.2];
        let flags: Vec<bool> = ts.iter().map(|&t| knn.member_at(&x, t).unwrap()).collect();
        for w in flags.windows(2) {
            assert!(w[0] || !w[1], "knn: region grew from one t to the next");
        }
    }
    "4 combiners x (100 samples x 11 levels nested, 1000 bump trials clean)".to_string()
}

// ---------------------------------------------------------------------------
// 8. With one column the level-based families rank exactly like the raw
//    score: family AUROC matches auroc_scalar within 1e-3.

fn c08_scalar_reduction() -> String {
    let mut rng = SplitMix64::new(0xACC0808);
    let cal = matrix_from_rows(&normal_rows(&mut rng, 400, 1, 0.0), ID_ORIGIN);
    let id_eval = matrix_from_rows(&normal_rows(&mut rng, 250, 1, 0.0), ID_ORIGIN);
    let ood_eval = matrix_from_rows(&normal_rows(&mut rng, 250, 1, 1.2), "shifted");
    let raw = auroc_scalar(&id_eval.column(0), &ood_eval.column(0)).unwrap();

    let knn_params = CenterOutwardParams {
        n_reference: Some(1600),
        seed: 8,
        ..CenterOutwardParams::default()
    };
    let combiners: Vec<(&str, CombinerSpec64)> = vec![
        ("ecdf", CombinerSpec::Ecdf),
        (
            "copula",
            CombinerSpec::Copula {
                marginal: MarginalFamily::Uniform,
                family: None,
            },
        ),
        ("centerout-knn", CombinerSpec::CenterOutward(knn_params)),
    ];
    let grid = uniform_grid::<f64>(1001);
    let mut deltas = Vec::new();
    for (label, spec) in &combiners {
        let detector = spec.fit(&cal).unwrap();
        let curve = family_roc(detector.as_ref(), &id_eval, &ood_eval, &grid).unwrap();
        let diff = (curve.area() - raw).abs();
        assert!(diff <= 1e-3, "{label}: family {} vs raw {raw}", curve.area());
        deltas.push(format!("{label} {diff:.1e}"));
    }
    format!("raw auroc {raw:.4}; deviations {}", deltas.join(", "))
}

// ---------------------------------------------------------------------------
// 9. Beam search returns the best tuple among exactly the tuples the
//    documented procedure evaluates, and depth 1 is the best singleton.

fn c09_beam_contract() -> String {
    let spec = GaussianScoreSpec {
        n_id: 300,
        n_ood: 200,
        d: 6,
        mu_ood: vec![1.4, 1.1, 0.9, 0.7, 0.4, 0.2],
        correlation: identity_correlation(6),
        seed: 0xACC0909,
    };
    let (id, ood) = gen_gaussian_scores::<f64>(&spec).unwrap();
    let cal = id.subset_rows(&(0..150).collect::<Vec<_>>()).unwrap();
    let val_id = id.subset_rows(&(150..300).collect::<Vec<_>>()).unwrap();
    let combiner = CombinerSpec::Ecdf;
    let grid = uniform_grid::<f64>(1001);
    let names = cal.detector_names().to_vec();

    let report = beam_search(&cal, &val_id, &ood, &combiner, 2, 3).unwrap();

    // Replay the documented procedure: every singleton, then every kept
    // tuple extended by each absent detector, level by level.
    let score = |subset: &[String]| -> f64 {
        eval_subset(&cal, &val_id, &ood, &combiner, subset, &grid).unwrap()
    };
    let mut evaluated: Vec<(Vec<String>, f64)> = Vec::new();
    for name in &names {
        evaluated.push((vec![name.clone()], score(std::slice::from_ref(name))));
    }
    for level in &report.levels {
        if level.level == 1 {
            continue;
        }
        let previous = &report.levels[level.level - 2];
        for kept in &previous.kept {
            for name in &names {
                if kept.candidate.names().contains(name) {
                    continue;
                }
                let mut subset: Vec<String> = kept.candidate.names().to_vec();
                subset.push(name.clone());
                subset.sort();
                evaluated.push((subset.clone(), score(&subset)));
            }
        }
    }
    let oracle = evaluated
        .iter()
        .max_by(|a, b| {
            a.1.partial_cmp(&b.1)
                .unwrap()
                .then_with(|| b.0.join("+").cmp(&a.0.join("+")))
        })
        .unwrap();
    assert_eq!(
        report.best_overall.candidate.key(),
        oracle.0.join("+"),
        "beam winner differs from enumeration"
    );
    assert!(
        (report.best_overall.auroc - oracle.1).abs() <= 1e-15,
        "beam winner auroc differs from enumeration"
    );

    let shallow = beam_search(&cal, &val_id, &ood, &combiner, 2, 1).unwrap();
    let best_single: &EvalRecord<f64> = shallow
        .levels[0]
        .kept
        .first()
        .expect("depth-1 beam keeps at least one record");
    assert_eq!(shallow.best_overall.candidate, best_single.candidate);
    assert_eq!(shallow.best_overall.candidate.names().len(), 1);
    let singles: Vec<f64> = names.iter().map(|n| score(std::slice::from_ref(n))).collect();
    let max_single = singles.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((shallow.best_overall.auroc - max_single).abs() <= 1e-15);
    format!(
        "winner {} matches the {}-tuple enumeration; depth 1 picks the best singleton",
        report.best_overall.candidate.key(),
        evaluated.len()
    )
}

// ---------------------------------------------------------------------------
// 10. Sensitivity analysis surfaces a perfectly separating detector in
//     every seed and always emits exactly 11 candidate subsets.

fn c10_sensitivity() -> String {
    for seed in 0..10u64 {
        let spec = GaussianScoreSpec {
            n_id: 400,
            n_ood: 200,
            d: 5,
            // Column 1 separates completely; the rest carry no signal.
            mu_ood: vec![8.0, 0.0, 0.0, 0.0, 0.0],
            correlation: identity_correlation(5),
            seed: 0xACC1010 + seed,
        };
        let (id, ood) = gen_gaussian_scores::<f64>(&spec).unwrap();
        let cal = id.subset_rows(&(0..200).collect::<Vec<_>>()).unwrap();
        let val_id = id.subset_rows(&(200..400).collect::<Vec<_>>()).unwrap();
        assert_eq!(
            auroc_scalar(&val_id.column(0), &ood.column(0)).unwrap(),
            1.0,
            "seed {seed}: construction should separate perfectly"
        );
        let report =
            sensitivity_search(&cal, &val_id, &ood, &CombinerSpec::Ecdf, 200, 90.0, seed)
                .unwrap();
        assert!(
            report.top_detectors.contains(&"s1".to_string()),
            "seed {seed}: s1 missing from {:?}",
            report.top_detectors
        );
        assert_eq!(
            report.candidate_sets.len(),
            11,
            "seed {seed}: wrong candidate count"
        );
    }
    "s1 in top detectors for 10/10 seeds, 11 candidate sets each".to_string()
}

// ---------------------------------------------------------------------------
// 11. Two independent dimensions of individual AUROC ~ 0.76 combine to at
//     least 0.80 under ECDF, Frank copula, and KNN center-outward, near
//     the 0.841 sum-score reference.

fn c11_combination_gain() -> String {
    let spec = GaussianScoreSpec {
        n_id: 5000,
        n_ood: 5000,
        d: 2,
        mu_ood: vec![1.0, 1.0],
        correlation: identity_correlation(2),
        seed: 0xACC1111,
    };
    let (id, ood) = gen_gaussian_scores::<f64>(&spec).unwrap();
    let id_bundle = split_id(&id, &SplitSpec::new(vec![0.25, 0.25, 0.5], 42).unwrap()).unwrap();
    let ood_bundle = split_ood(&ood, &SplitSpec::new(vec![0.5, 0.5], 42).unwrap()).unwrap();
    let cal = id.subset_rows(id_bundle.part("cal").unwrap()).unwrap();
    let id_test = id.subset_rows(id_bundle.part("test").unwrap()).unwrap();
    let ood_test = ood.subset_rows(ood_bundle.part("test").unwrap()).unwrap();

    for c in 0..2 {
        let individual = auroc_scalar(&id_test.column(c), &ood_test.column(c)).unwrap();
        assert!(
            (individual - 0.760).abs() <= 0.03,
            "column {c}: individual auroc {individual}"
        );
    }
    let sum_scores = |m: &Matrix| -> Vec<f64> {
        (0..m.n_rows())
            .map(|r| m.row(r).iter().sum::<f64>())
            .collect()
    };
    let reference = auroc_scalar(&sum_scores(&id_test), &sum_scores(&ood_test)).unwrap();
    assert!(
        (reference - 0.841).abs() <= 0.02,
        "sum-score reference {reference}"
    );

    let knn_params = CenterOutwardParams {
        seed: 42,
        ..CenterOutwardParams::default()
    };
    let combiners: Vec<(&str, CombinerSpec64)> = vec![
        ("ecdf", CombinerSpec::Ecdf),
        (
            "frank copula",
            CombinerSpec::Copula {
                marginal: MarginalFamily::Uniform,
                family: Some(CopulaFamily::Frank),
            },
        ),
        ("centerout-knn", CombinerSpec::CenterOutward(knn_params)),
    ];
    let grid = uniform_grid::<f64>(1001);
    let mut scores = Vec::new();
    for (label, combiner) in &combiners {
        let detector = combiner.fit(&cal).unwrap();
        let curve = family_roc(detector.as_ref(), &id_test, &ood_test, &grid).unwrap();
        let auroc = curve.area();
        assert!(auroc >= 0.80, "{label}: test auroc {auroc} below the floor");
        scores.push(format!("{label} {auroc:.3}"));
    }
    format!("{}; sum reference {reference:.3}", scores.join(", "))
}

// ---------------------------------------------------------------------------
// 12. The synth -> split -> search -> eval pipeline exits 0, reruns are
//     byte-identical, and search refuses test-tagged inputs.

fn c12_end_to_end_cli() -> String {
    let tmp = tempfile::TempDir::new().unwrap();
    let dir = tmp.path();
    let run = |args: &[&str]| -> Output {
        Command::new(env!("CARGO_BIN_EXE_oodfuse"))
            .current_dir(dir)
            .args(args)
            .output()
            .expect("binary runs")
    };
    let run_ok = |args: &[&str]| {
        let out = run(args);
        assert!(
            out.status.success(),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };

    run_ok(&[
        "synth", "--n-id", "400", "--n-ood", "300", "--mu", "1.5,1.0,0.5", "--rho", "0.2",
        "--seed", "4242", "--out-prefix", "run",
    ]);
    run_ok(&["split", "--id", "run_id.csv", "--out-prefix", "id"]);
    run_ok(&["split", "--ood", "run_ood.csv", "--out-prefix", "ood"]);
    let search_args = [
        "search", "--id", "run_id.csv", "--ood", "run_ood.csv", "--strategy", "pairs",
        "--seed", "4242", "--out", "search.json",
    ];
    run_ok(&search_args);
    let first_search = std::fs::read(dir.join("search.json")).unwrap();
    let eval_args = [
        "eval", "--id", "run_id.csv", "--ood", "run_ood.csv", "--seed", "4242", "--out",
        "eval.json",
    ];
    run_ok(&eval_args);
    let first_eval = std::fs::read(dir.join("eval.json")).unwrap();

    run_ok(&search_args);
    assert_eq!(
        first_search,
        std::fs::read(dir.join("search.json")).unwrap(),
        "search reports differ between same-seed runs"
    );
    run_ok(&eval_args);
    assert_eq!(
        first_eval,
        std::fs::read(dir.join("eval.json")).unwrap(),
        "eval reports differ between same-seed runs"
    );

    let refused = run(&[
        "search", "--id", "id_test.csv", "--ood", "run_ood.csv", "--strategy", "pairs",
        "--out", "refused.json",
    ]);
    assert!(!refused.status.success(), "test-tagged input was accepted");
    assert!(!dir.join("refused.json").exists());
    let overridden = run(&[
        "search", "--id", "id_test.csv", "--ood", "run_ood.csv", "--strategy", "pairs",
        "--final-eval", "--out", "final.json",
    ]);
    assert!(overridden.status.success(), "--final-eval override failed");
    "pipeline exits 0, reruns byte-identical, test tag refused".to_string()
}
