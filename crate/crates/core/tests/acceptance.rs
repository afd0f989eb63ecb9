//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use brain_ensemble::data::{make_split, Dataset};
use brain_ensemble::ensemble::{
    dynamic_losses, fit_dynamic_weights, power_weights, DynamicWeightConfig, WeightVector,
};
use brain_ensemble::metrics::{pearson_metric, two_v_two};
use brain_ensemble::pca::fit_pca;
use brain_ensemble::pipeline::{Experiment, ExperimentPlan, MethodKind};
use brain_ensemble::regression::{fit_ridge, normal_equation_residual};
use brain_ensemble::synthetic::{generate, SyntheticConfig};
use common::*;
use nalgebra::DMatrix;
use rand::Rng;

const RIDGE_TOL: f64 = 1e-8;
const PEARSON_TOL: f64 = 1e-12;
const PCA_TOL: f64 = 1e-8;
const POWER_TOL: f64 = 1e-12;
const SIMPLEX_TOL: f64 = 1e-12;
const RECOVERY_L1: f64 = 0.05;
const COLLAPSE_TOL: f64 = 1e-12;
const SUITE_BUDGET: Duration = Duration::from_secs(300);

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, budget: Duration) -> bool {
    elapsed < budget
}

fn ridge_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let lambdas = [0.1, 1.0, 10.0];
    let mut worst_resid = 0.0f64;
    let mut worst_diff = 0.0f64;
    for i in 0..20u64 {
        let mut r = rng(100 + i);
        let x = random_matrix(&mut r, 50, 20);
        let y = random_matrix(&mut r, 50, 7);
        let lambda = lambdas[i as usize % 3];
        let model = fit_ridge(&x, &y, lambda).expect("fit");
        worst_resid = worst_resid.max(normal_equation_residual(&model, &x, &y).expect("residual"));
        let (w, _) = ridge_oracle(&rows(&x), &rows(&y), lambda);
        let diff = max_abs_diff(&rows(model.weights()), &w) / (1.0 + max_abs(&w));
        worst_diff = worst_diff.max(diff);
    }
    let elapsed = start.elapsed();
    outcome(
        worst_resid <= RIDGE_TOL && worst_diff <= RIDGE_TOL && within(elapsed, Duration::from_secs(5)),
        format!("max residual {worst_resid:.2e}, max rel diff vs dense solve {worst_diff:.2e}, {elapsed:.2?}"),
    )
}

fn two_v_two_equivalence() -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    for i in 0..50u64 {
        let mut r = rng(200 + i);
        let y = random_matrix(&mut r, 12, 6);
        let noise = random_matrix(&mut r, 12, 6);
        let yhat = &y + noise * r.random_range(0.5..4.0);
        if two_v_two(&y, &yhat).expect("2v2") != two_v_two_oracle(&rows(&y), &rows(&yhat)) {
            mismatches += 1;
        }
    }
    let mut r = rng(250);
    let y = random_matrix(&mut r, 12, 6);
    let perfect = two_v_two(&y, &y).expect("2v2");
    let pair = random_matrix(&mut r, 2, 6);
    let swapped = DMatrix::from_fn(2, 6, |row, c| pair[(1 - row, c)]);
    let swap_score = two_v_two(&pair, &swapped).expect("2v2");
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0
            && perfect == 1.0
            && swap_score == 0.0
            && within(elapsed, Duration::from_secs(2)),
        format!(
            "{mismatches}/50 mismatches, perfect {perfect}, swapped {swap_score}, {elapsed:.2?}"
        ),
    )
}

fn pearson_affine_invariance() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_oracle = 0.0f64;
    let mut worst_self = 0.0f64;
    for i in 0..50u64 {
        let mut r = rng(300 + i);
        let y = random_matrix(&mut r, 15, 8);
        let yhat = &y + random_matrix(&mut r, 15, 8);
        let base = pearson_metric(&y, &yhat).expect("pc");
        worst_oracle =
            worst_oracle.max((base - rowwise_pearson_oracle(&rows(&y), &rows(&yhat))).abs());
        let coeffs: Vec<(f64, f64)> = (0..15)
            .map(|_| (r.random_range(0.1..10.0), r.random_range(-5.0..5.0)))
            .collect();
        let moved = DMatrix::from_fn(15, 8, |row, c| {
            coeffs[row].0 * yhat[(row, c)] + coeffs[row].1
        });
        worst = worst.max((pearson_metric(&y, &moved).expect("pc") - base).abs());
        let (a, b) = (r.random_range(0.1..10.0), r.random_range(-5.0..5.0));
        let scaled = y.map(|v| a * v + b);
        worst_self = worst_self.max((pearson_metric(&y, &scaled).expect("pc") - 1.0).abs());
    }
    outcome(
        worst <= PEARSON_TOL && worst_self <= PEARSON_TOL && worst_oracle <= PEARSON_TOL,
        format!("affine drift {worst:.2e}, |PC(Y, aY+b) - 1| {worst_self:.2e}, oracle diff {worst_oracle:.2e}"),
    )
}

fn pca_spectral_identity() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let mut r = rng(400 + i);
        let x = random_matrix(&mut r, 40, 10);
        let k = 1 + i as usize % 8;
        let model = fit_pca(&x, k).expect("pca");
        let recon = model
            .inverse_transform(&model.transform(&x).expect("transform"))
            .expect("inverse");
        let mse = (&x - recon).norm_squared() / x.nrows() as f64;
        let eig = jacobi_eigenvalues(&covariance(&rows(&x)));
        let discarded: f64 = eig[k..].iter().sum();
        worst = worst.max((mse - discarded).abs() / discarded.abs().max(f64::MIN_POSITIVE));
    }
    outcome(worst <= PCA_TOL, format!("max relative error {worst:.2e}"))
}

fn power_weight_law() -> Outcome {
    let mut worst = 0.0f64;
    let mut uniform_worst = 0.0f64;
    for p in 1..=10 {
        let p = p as f64;
        let w = power_weights(&[0.8, 0.4], p).expect("weights");
        let ratio = w.as_slice()[0] / w.as_slice()[1];
        worst = worst.max((ratio - 2f64.powf(p)).abs() / 2f64.powf(p));
        for n in [2usize, 5, 11] {
            let u = power_weights(&vec![0.63; n], p).expect("weights");
            for wi in u.as_slice() {
                uniform_worst = uniform_worst.max((wi - 1.0 / n as f64).abs());
            }
        }
    }
    outcome(
        worst <= POWER_TOL && uniform_worst <= POWER_TOL,
        format!("max relative ratio error {worst:.2e}, max uniform deviation {uniform_worst:.2e}"),
    )
}

fn dynamic_recovery() -> Outcome {
    let start = Instant::now();
    let planted = [0.7, 0.2, 0.1];
    let mut recovered = 0;
    let mut off_simplex = 0;
    let mut planted_not_better = 0;
    let mut worst_l1 = 0.0f64;
    for seed in 0..20u64 {
        let cfg = SyntheticConfig {
            seed,
            n_samples: 200,
            dim: 16,
            latent_dim: 16,
            n_tasks: 3,
            n_voxels: 50,
            voxel_noise_sigma: 0.01,
            planted_weights: Some(planted.to_vec()),
            ..Default::default()
        };
        let data = generate(&cfg).expect("generate");
        let tasks: Vec<DMatrix<f64>> = data.tasks.iter().map(|t| t.data().clone()).collect();
        let y = data.responses[0].data();
        let dcfg = DynamicWeightConfig {
            seed,
            ..Default::default()
        };
        let fit = fit_dynamic_weights(&tasks, y, &dcfg).expect("dynamic");
        let w = fit.weights.as_slice();
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL || w.iter().any(|x| *x < 0.0) {
            off_simplex += 1;
        }
        let l1: f64 = w.iter().zip(planted).map(|(a, b)| (a - b).abs()).sum();
        worst_l1 = worst_l1.max(l1);
        if l1 <= RECOVERY_L1 {
            recovered += 1;
        }
        let at_planted = dynamic_losses(
            &tasks,
            y,
            &WeightVector::normalized(planted.to_vec()).unwrap(),
            &dcfg,
        )
        .expect("loss");
        let at_uniform = dynamic_losses(&tasks, y, &WeightVector::uniform(3), &dcfg).expect("loss");
        if at_planted.train_mse >= at_uniform.train_mse {
            planted_not_better += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        recovered >= 18 && off_simplex == 0 && planted_not_better == 0 && within(elapsed, Duration::from_secs(60)),
        format!(
            "{recovered}/20 within L1 {RECOVERY_L1} (worst {worst_l1:.4}), {off_simplex} off simplex, \
             planted loss not below uniform in {planted_not_better}, {elapsed:.2?}"
        ),
    )
}

fn ensemble_gain() -> Outcome {
    let mut wins = 0;
    let mut margin = 0.0;
    for seed in 0..100u64 {
        let cfg = SyntheticConfig {
            seed,
            n_samples: 200,
            n_tasks: 5,
            task_noise_sigma: 1.0,
            ..Default::default()
        };
        let data = generate(&cfg).expect("generate");
        let plan = ExperimentPlan {
            methods: vec![MethodKind::Baseline, MethodKind::Average],
            ..Default::default()
        };
        let experiment = Experiment::from_dataset(
            plan,
            Dataset {
                tasks: data.tasks,
                responses: data.responses,
            },
            make_split(cfg.n_samples, seed).expect("split"),
        )
        .expect("experiment");
        let reports = experiment.run().expect("run");
        let best = reports
            .iter()
            .filter(|r| r.method.starts_with("baseline:"))
            .map(|r| r.pearson)
            .fold(f64::NEG_INFINITY, f64::max);
        let average = reports
            .iter()
            .find(|r| r.method == "average")
            .expect("average")
            .pearson;
        margin += average - best;
        if average > best {
            wins += 1;
        }
    }
    outcome(
        wins >= 90,
        format!(
            "average beat best single task in {wins}/100 seeds, mean margin {:.4}",
            margin / 100.0
        ),
    )
}

fn poisoned(m: &DMatrix<f64>, test: &[usize]) -> DMatrix<f64> {
    let mut out = m.clone();
    for &r in test {
        out.row_mut(r).fill(f64::NAN);
    }
    out
}

fn leak_canary() -> Outcome {
    let cfg = SyntheticConfig {
        seed: 8,
        n_samples: 120,
        dim: 24,
        n_tasks: 4,
        n_voxels: 30,
        latent_dim: 8,
        subjects: 2,
        ..Default::default()
    };
    let data = generate(&cfg).expect("generate");
    let split = make_split(cfg.n_samples, 8).expect("split");
    let plan = ExperimentPlan {
        methods: MethodKind::ALL.to_vec(),
        explicit_weights: Some(vec![0.4, 0.3, 0.2, 0.1]),
        pca_k: 6,
        ..Default::default()
    };
    let tasks: Vec<(String, DMatrix<f64>)> = data
        .tasks
        .iter()
        .map(|t| (t.task_id().to_string(), t.data().clone()))
        .collect();
    let responses: Vec<(String, String, DMatrix<f64>)> = data
        .responses
        .iter()
        .map(|r| {
            (
                r.subject_id().to_string(),
                r.roi_id().to_string(),
                r.data().clone(),
            )
        })
        .collect();
    let clean = Experiment::from_parts(
        plan.clone(),
        tasks.clone(),
        responses.clone(),
        split.clone(),
    )
    .expect("clean")
    .fit_all()
    .expect("fit clean");
    let test = &split.test_indices;
    let dirty = Experiment::from_parts(
        plan,
        tasks
            .iter()
            .map(|(id, m)| (id.clone(), poisoned(m, test)))
            .collect(),
        responses
            .iter()
            .map(|(s, r, m)| (s.clone(), r.clone(), poisoned(m, test)))
            .collect(),
        split.clone(),
    )
    .expect("poisoned")
    .fit_all()
    .expect("fit poisoned");
    let differing = clean
        .iter()
        .zip(&dirty)
        .filter(|(a, b)| a.method != b.method || a.encode() != b.encode())
        .count();
    outcome(
        clean.len() == dirty.len() && differing == 0 && !clean.is_empty(),
        format!(
            "{} fitted units, {differing} differ after poisoning test rows",
            clean.len()
        ),
    )
}

fn cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_brain-ensemble"))
        .args(args)
        .env("RUST_LOG", "warn")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_default()
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let root = dir.path();
    let fixture = root.join("fixture");
    let s = |p: &Path| p.to_str().expect("utf-8 path").to_string();
    if !cli(&["synth", "--out", &s(&fixture), "--seed", "9"]) {
        return outcome(false, "synth failed");
    }
    let manifest = s(&fixture.join("manifest.json"));
    let runs = [("a", "1"), ("b", "8"), ("c", "1")];
    for (name, threads) in runs {
        let out = s(&root.join(name));
        if !cli(&[
            "run",
            "--manifest",
            &manifest,
            "--out",
            &out,
            "--seed",
            "3",
            "--threads",
            threads,
        ]) {
            return outcome(false, format!("run {name} failed"));
        }
    }
    // rerun into an existing directory
    if !cli(&[
        "run",
        "--manifest",
        &manifest,
        "--out",
        &s(&root.join("c")),
        "--seed",
        "3",
        "--force",
    ]) {
        return outcome(false, "forced rerun failed");
    }
    let mut identical = true;
    for file in ["reports.csv", "reports.json", "summary.csv", "figure.svg"] {
        let a = read(&root.join("a").join(file));
        identical &= !a.is_empty();
        for other in ["b", "c"] {
            identical &= a == read(&root.join(other).join(file));
        }
    }
    outcome(identical, "reports.csv, reports.json, summary.csv, figure.svg byte-identical across --threads 1, --threads 8 and a --force rerun")
}

fn uniform_collapse() -> Outcome {
    let cfg = SyntheticConfig {
        seed: 10,
        n_samples: 150,
        subjects: 2,
        rois: 2,
        n_voxels: 60,
        ..Default::default()
    };
    let data = generate(&cfg).expect("generate");
    let plan = ExperimentPlan {
        methods: vec![MethodKind::Average, MethodKind::WeightedAverage],
        ..Default::default()
    };
    let experiment = Experiment::from_dataset(
        plan,
        Dataset {
            tasks: data.tasks,
            responses: data.responses,
        },
        make_split(cfg.n_samples, 10).expect("split"),
    )
    .expect("experiment");
    let baselines = experiment.fit_baselines().expect("baselines");
    let table = baselines.accuracy.with_uniform_scores(0.7).expect("table");
    let reports = experiment
        .run_ensembles(Some(&baselines), Some(&table))
        .expect("ensembles");
    let mut worst = 0.0f64;
    let mut compared = 0;
    for w in reports.iter().filter(|r| r.method == "weighted-average") {
        let avg = reports
            .iter()
            .find(|r| r.method == "average" && r.subject == w.subject && r.roi == w.roi)
            .expect("average report");
        worst = worst
            .max((w.pearson - avg.pearson).abs())
            .max((w.two_v_two - avg.two_v_two).abs());
        compared += 1;
    }
    outcome(
        worst <= COLLAPSE_TOL && compared == 4 * experiment.plan().p_values.len(),
        format!("{compared} weighted-average reports, max score difference {worst:.2e}"),
    )
}

fn main() {
    let suite_start = Instant::now();
    let criteria: [(&str, Check); 10] = [
        (
            "ridge matches dense normal-equation solve",
            ridge_oracle_equivalence,
        ),
        ("2v2 matches brute-force double loop", two_v_two_equivalence),
        (
            "Pearson metric is per-row affine invariant",
            pearson_affine_invariance,
        ),
        (
            "PCA reconstruction error equals discarded eigenvalues",
            pca_spectral_identity,
        ),
        ("power weights follow the ratio law", power_weight_law),
        (
            "dynamic weights recover planted simplex vector",
            dynamic_recovery,
        ),
        ("average ensemble beats best single task", ensemble_gain),
        (
            "NaN-poisoned test rows leave fitted models unchanged",
            leak_canary,
        ),
        (
            "CLI run output is deterministic across thread counts",
            cli_determinism,
        ),
        (
            "uniform accuracy table collapses weighted-average to average",
            uniform_collapse,
        ),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let status = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {status} {name}: {} [{:.2?}]",
            i + 1,
            result.detail,
            start.elapsed()
        );
    }
    let total = suite_start.elapsed();
    let pass = within(total, SUITE_BUDGET);
    if !pass {
        failures += 1;
    }
    println!(
        "criterion 11 {} full suite within {SUITE_BUDGET:?}: {total:.2?}",
        if pass { "PASS" } else { "FAIL" }
    );
    println!("acceptance: {} of 11 criteria passed", 11 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
