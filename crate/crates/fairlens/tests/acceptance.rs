//! Acceptance suite: one test per criterion, each printing a PASS line when
//! it holds. Run with `cargo test --test acceptance -- --nocapture` to see
//! the lines; any failed assertion fails the criterion.

mod common;

use std::time::Instant;

use common::*;
use fairlens::causality::{
    analyze_all, causality_attribute, causality_neuron, ResponsibilityStats,
};
use fairlens::dataset::{encode, load_csv, split, synth_generate, Schema};
use fairlens::metrics::{self, max_pairwise_gap, FairnessMetric, MetricKind};
use fairlens::model::{loss_gradients, loss_value, train_for_schema, Layer, TrainConfig};
use fairlens::repair::{reweigh, run_method, RepairContext, RepairParams};
use fairlens::selector::{default_methods, recommend_from_stats, select_category, RepairCategory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn criterion_1_gds_worked_example() {
    let rates = [0.144, 0.396, 0.090, 0.285];
    let gds = max_pairwise_gap(&rates);
    // 0.306 up to one ulp of f64 subtraction (0.396 - 0.090)
    assert!(
        (gds - 0.306).abs() < 1e-15,
        "gds on the worked rates is {gds}, expected 0.306"
    );
    println!("ACCEPTANCE 1 (gds worked example): PASS — gds = {gds}");
}

#[test]
fn criterion_2_selector_table_reproduction() {
    let mut matches = 0;
    for &(p_f, p_n, cv_f, cv_n, expected, name) in SELECTOR_TABLE {
        let stats = ResponsibilityStats {
            p_f,
            p_n,
            cv_f,
            cv_n,
            responsible_attributes: Vec::new(),
            responsible_neurons: Vec::new(),
            baseline: 0.0,
        };
        let got = select_category(&stats, 0.10).unwrap();
        let expected = match expected {
            "pre" => RepairCategory::Pre,
            "in" => RepairCategory::In,
            other => panic!("unexpected category {other}"),
        };
        assert_eq!(got, expected, "row {name}");
        matches += 1;
    }
    assert_eq!(matches, 20);
    println!("ACCEPTANCE 2 (selector table reproduction): PASS — 20/20 decisions match");
}

#[test]
fn criterion_3_aie_oracle_equivalence() {
    let started = Instant::now();
    let shapes: [&[usize]; 3] = [&[3], &[4, 3], &[2, 2]];
    let metrics_used = [
        FairnessMetric::new(MetricKind::Spd, vec!["gender".into()]).unwrap(),
        FairnessMetric::new(MetricKind::Gds, vec!["gender".into(), "race".into()]).unwrap(),
        FairnessMetric::new(MetricKind::Cds, vec!["gender".into(), "race".into()]).unwrap(),
    ];
    let mut fixtures = 0;
    let mut comparisons = 0;
    for seed in 0..12u64 {
        let hidden = shapes[seed as usize % shapes.len()];
        let model = random_network(hidden, 1000 + seed);
        let n_rows = 6 + (seed as usize % 5); // 6..=10
        let data = two_protected_dataset(n_rows, 2000 + seed);
        let metric = &metrics_used[seed as usize % metrics_used.len()];
        let num_interval = 3 + (seed as usize % 3); // 3..=5

        for (layer, index) in [
            (0usize, 0usize),
            (hidden.len() - 1, hidden[hidden.len() - 1] - 1),
        ] {
            let record =
                causality_neuron(&model, &data, layer, index, metric, num_interval).unwrap();
            let oracle = brute_aie_neuron(&model, &data, layer, index, metric, num_interval);
            assert!(
                (record.aie - oracle).abs() < 1e-9,
                "seed {seed} neuron ({layer},{index}): {} vs oracle {oracle}",
                record.aie
            );
            comparisons += 1;
        }
        for attribute in ["gender", "age", "grade"] {
            let record =
                causality_attribute(&model, &data, attribute, metric, num_interval).unwrap();
            let oracle = brute_aie_attribute(&model, &data, attribute, metric, num_interval);
            assert!(
                (record.aie - oracle).abs() < 1e-9,
                "seed {seed} attribute {attribute}: {} vs oracle {oracle}",
                record.aie
            );
            comparisons += 1;
        }
        fixtures += 1;
    }
    assert!(fixtures >= 10);
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "oracle battery took {elapsed:.1}s");
    println!(
        "ACCEPTANCE 3 (aie oracle equivalence): PASS — {fixtures} fixtures, {comparisons} \
         comparisons within 1e-9 in {elapsed:.2}s"
    );
}

#[test]
fn criterion_4_reweighing_balance() {
    let started = Instant::now();
    // worked cell: |D| = 10, privileged 5, favorable 4, overlap 3
    let schema = fairlens::dataset::synth_schema();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let plan: [(bool, usize); 10] = [
        (true, 1),
        (true, 1),
        (true, 1),
        (true, 0),
        (true, 0),
        (false, 1),
        (false, 0),
        (false, 0),
        (false, 0),
        (false, 0),
    ];
    for (i, &(privileged, label)) in plan.iter().enumerate() {
        rows.push(vec![
            fairlens::dataset::Value::Cat(if privileged { "A" } else { "B" }.into()),
            fairlens::dataset::Value::Num(0.09 * i as f64),
            fairlens::dataset::Value::Num(0.4),
            fairlens::dataset::Value::Num(0.6),
            fairlens::dataset::Value::Cat("mid".into()),
        ]);
        labels.push(label);
    }
    let worked = fairlens::dataset::Dataset::new(schema, rows, labels).unwrap();
    let weights = reweigh(&worked, "group", 1).unwrap();
    assert_eq!(weights[0], 2.0 / 3.0, "worked privileged-favorable cell");

    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut fixtures = 0;
    while fixtures < 50 {
        let data =
            synth_generate(30 + rng.gen_range(0..40), rng.gen::<f64>() * 0.5, rng.gen()).unwrap();
        let weights = match reweigh(&data, "group", 1) {
            Ok(w) => w,
            Err(_) => continue, // some random fixture has an empty cell
        };
        let mask = data.privileged_mask("group").unwrap();
        let rate = |side: bool| {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..data.n_rows() {
                if mask[i] == side {
                    den += weights[i];
                    if data.labels[i] == 1 {
                        num += weights[i];
                    }
                }
            }
            num / den
        };
        assert!(
            (rate(true) - rate(false)).abs() < 1e-9,
            "fixture {fixtures}"
        );
        fixtures += 1;
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "reweighing battery took {elapsed:.1}s");
    println!(
        "ACCEPTANCE 4 (reweighing balance): PASS — worked cell 2/3 exact, {fixtures} fixtures \
         balanced within 1e-9 in {elapsed:.2}s"
    );
}

#[test]
fn criterion_5_end_to_end_bias_reduction() {
    let started = Instant::now();
    let seed = 42;
    let data = synth_generate(10_000, 0.3, seed).unwrap();
    let (train_set, test_set) = split(&data, 0.7, seed).unwrap();
    let config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let matrix = encode(&train_set).unwrap();
    let baseline = train_for_schema(
        &matrix,
        &config,
        None,
        train_set.schema.fingerprint(),
        train_set.schema.favorable_label,
    )
    .unwrap();
    let metric = FairnessMetric::new(MetricKind::Spd, vec!["group".into()]).unwrap();
    let baseline_spd = metrics::spd(&baseline, &test_set, "group", None).unwrap();
    assert!(
        baseline_spd >= 0.15,
        "baseline spd {baseline_spd} below 0.15"
    );

    let (_, stats) = analyze_all(&baseline, &train_set, &metric, 20).unwrap();
    let recommendation = recommend_from_stats(stats, 0.10, &default_methods()).unwrap();

    let ctx = RepairContext {
        train: &train_set,
        test: &test_set,
        config: &config,
        metric: &metric,
        baseline: &baseline,
    };
    let (repaired, _, outcome) =
        run_method(&ctx, recommendation.method, &RepairParams::default()).unwrap();

    let relative = outcome.improvement / outcome.fairness_before;
    assert!(
        relative >= 0.30,
        "recommended {} reduced spd only {:.1}% ({} -> {})",
        recommendation.method.as_str(),
        100.0 * relative,
        outcome.fairness_before,
        outcome.fairness_after
    );
    assert!(
        outcome.accuracy_delta >= -0.05,
        "accuracy fell {:.3} points",
        -100.0 * outcome.accuracy_delta
    );

    // individual-discrimination side effect, reported but not asserted
    let attrs = vec!["group".to_string()];
    let cds_before = metrics::cds(&baseline, &test_set, &attrs).unwrap();
    let cds_after = repaired
        .as_ref()
        .map(|m| metrics::cds(m, &test_set, &attrs).unwrap());

    // soft category contract: compare the chosen method's score against the
    // other categories' representatives (reported, not asserted)
    for method in [
        fairlens::selector::Method::Reweigh,
        fairlens::selector::Method::FairnessRegularizer,
        fairlens::selector::Method::RejectOption,
    ] {
        if method == recommendation.method {
            continue;
        }
        let (_, _, other) = run_method(&ctx, method, &RepairParams::default()).unwrap();
        println!(
            "  (category contract) chosen {} score {:+.3} vs {} score {:+.3}",
            recommendation.method.as_str(),
            outcome.score(),
            method.as_str(),
            other.score()
        );
    }

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "end-to-end run took {elapsed:.1}s");
    println!(
        "ACCEPTANCE 5 (end-to-end bias reduction): PASS — {} selected, spd {:.3} -> {:.3} \
         ({:.0}% relative), accuracy delta {:+.3}, cds {:.3} -> {}, {elapsed:.1}s",
        recommendation.method.as_str(),
        outcome.fairness_before,
        outcome.fairness_after,
        100.0 * relative,
        outcome.accuracy_delta,
        cds_before,
        cds_after.map_or("n/a".to_string(), |v| format!("{v:.3}")),
    );
}

#[test]
fn criterion_6_gradient_correctness() {
    let started = Instant::now();
    let data = synth_generate(8, 0.4, 33).unwrap();
    let matrix = encode(&data).unwrap();
    let mask = data.privileged_mask("group").unwrap();
    // fixed random 2-2-2 stack, biases nudged off the relu kinks
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut dims_layers: Vec<Layer> = Vec::new();
    for pair in [(matrix.n_cols(), 2), (2, 2), (2, 2)].iter().take(3) {
        let (fan_in, fan_out) = *pair;
        dims_layers.push(Layer {
            weights: (0..fan_out)
                .map(|_| (0..fan_in).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
            bias: (0..fan_out)
                .map(|_| 0.05 + 0.1 * rng.gen::<f64>())
                .collect(),
        });
    }
    let lambda = 0.7;
    let (_, grads) = loss_gradients(&dims_layers, &matrix, lambda, Some(&mask));
    let eps = 1e-6;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut check = |layers: &Vec<Layer>, l: usize, j: usize, k: Option<usize>, analytic: f64| {
        let mut plus = layers.clone();
        let mut minus = layers.clone();
        match k {
            Some(k) => {
                plus[l].weights[j][k] += eps;
                minus[l].weights[j][k] -= eps;
            }
            None => {
                plus[l].bias[j] += eps;
                minus[l].bias[j] -= eps;
            }
        }
        let fd = (loss_value(&plus, &matrix, lambda, Some(&mask))
            - loss_value(&minus, &matrix, lambda, Some(&mask)))
            / (2.0 * eps);
        let denom = analytic.abs().max(fd.abs()).max(1e-8);
        let rel = ((analytic - fd) / denom).abs();
        worst = worst.max(rel);
        assert!(
            rel < 1e-4,
            "layer {l} unit {j} k {k:?}: analytic {analytic} vs fd {fd}"
        );
        checked += 1;
    };
    for l in 0..dims_layers.len() {
        for j in 0..dims_layers[l].weights.len() {
            for k in 0..dims_layers[l].weights[j].len() {
                check(&dims_layers, l, j, Some(k), grads[l].weights[j][k]);
            }
            check(&dims_layers, l, j, None, grads[l].bias[j]);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "gradient check took {elapsed:.1}s");
    println!(
        "ACCEPTANCE 6 (gradient correctness): PASS — {checked} parameters, worst relative \
         error {worst:.2e} in {elapsed:.2}s"
    );
}

fn adult_csv_path() -> Option<std::path::PathBuf> {
    if let Ok(path) = std::env::var("FAIRLENS_ADULT_CSV") {
        let path = std::path::PathBuf::from(path);
        return path.exists().then_some(path);
    }
    let fallback = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/adult.csv");
    fallback.exists().then_some(fallback)
}

#[test]
fn criterion_7_benchmark_scale_replication() {
    let Some(path) = adult_csv_path() else {
        println!(
            "ACCEPTANCE 7 (benchmark-scale replication): SKIP — Adult Income dataset not \
             present (set FAIRLENS_ADULT_CSV or place data/adult.csv at the workspace root)"
        );
        return;
    };
    let started = Instant::now();
    let schema = Schema::preset("adult").unwrap();
    let (data, dropped) = load_csv(&path, &schema).unwrap();
    assert!(
        data.n_rows() > 30_000,
        "Adult Income has more than 30,000 samples"
    );
    let (train_set, test_set) = split(&data, 0.7, 42).unwrap();
    let config = TrainConfig {
        seed: 42,
        ..TrainConfig::default()
    };
    let matrix = encode(&train_set).unwrap();
    let model = train_for_schema(
        &matrix,
        &config,
        None,
        schema.fingerprint(),
        schema.favorable_label,
    )
    .unwrap();
    let accuracy = metrics::accuracy(&model, &test_set).unwrap();
    assert!(
        (accuracy - 0.817).abs() <= 0.03,
        "accuracy {accuracy:.4} outside 0.817 +/- 0.03"
    );
    let spd = metrics::spd(&model, &test_set, "gender", None).unwrap();
    assert!(
        (spd - 0.249).abs() <= 0.05,
        "spd(gender) {spd:.4} outside 0.249 +/- 0.05"
    );

    // published multi-attribute scores, reported for comparison
    let both = vec!["gender".to_string(), "race".to_string()];
    let gds = metrics::gds(&model, &test_set, &both, None).unwrap().value;
    let cds = metrics::cds(&model, &test_set, &both).unwrap();

    let metric = FairnessMetric::new(MetricKind::Spd, vec!["gender".into()]).unwrap();
    let sweep_started = Instant::now();
    let (_, stats) = analyze_all(&model, &train_set, &metric, 20).unwrap();
    let sweep_seconds = sweep_started.elapsed().as_secs_f64();
    assert!(
        sweep_seconds < 600.0,
        "causality analysis took {sweep_seconds:.0}s"
    );
    println!(
        "ACCEPTANCE 7 (benchmark-scale replication): PASS — {} rows ({dropped} dropped), \
         accuracy {accuracy:.3}, spd(gender) {spd:.3}, gds(gender+race) {gds:.3}, \
         cds(gender+race) {cds:.3}, P_f {:.3}, P_n {:.3}, sweep {sweep_seconds:.0}s, total {:.0}s",
        data.n_rows(),
        stats.p_f,
        stats.p_n,
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn criterion_8_metric_brute_force_equivalence() {
    let started = Instant::now();
    // cds equals an independent enumeration oracle, exactly
    for seed in 0..6u64 {
        let model = random_network(&[4, 3], 300 + seed);
        let data = two_protected_dataset(40 + 10 * seed as usize, 400 + seed);
        let attrs = vec!["gender".to_string(), "race".to_string()];
        let metric = FairnessMetric::new(MetricKind::Cds, attrs.clone()).unwrap();
        let fast = metrics::cds(&model, &data, &attrs).unwrap();
        let oracle = brute_metric_under(&model, &data, &metric, None, |row| {
            brute_encode_row(&data.schema, &model, row)
        });
        assert_eq!(fast, oracle, "cds mismatch at seed {seed}");
    }
    // gds over a single attribute equals spd, exactly, on 20 fixtures
    for seed in 0..20u64 {
        let model = random_network(&[3], 500 + seed);
        let data = two_protected_dataset(12 + seed as usize, 600 + seed);
        let gds = metrics::gds(&model, &data, &["gender".into()], None)
            .unwrap()
            .value;
        let spd = metrics::spd(&model, &data, "gender", None).unwrap();
        assert_eq!(gds, spd, "gds != spd at seed {seed}");
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        elapsed < 10.0,
        "metric equivalence battery took {elapsed:.1}s"
    );
    println!(
        "ACCEPTANCE 8 (metric brute-force equivalence): PASS — cds exact on 6 fixtures, \
         gds == spd on 20 fixtures in {elapsed:.2}s"
    );
}
