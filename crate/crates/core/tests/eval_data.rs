use proptest::prelude::*;
use tailprob::data::{generate_synthetic, load_csv, split, write_csv, CsvSchema, Dataset, SyntheticSpec};
use tailprob::eval::{
    analytic_ccdf, empirical_ccdf, ensemble_bands, evaluate, grid_levels, predict_ccdf, CcdfCurve,
    EvaluationReport, Truth, DEFAULT_LEVELS,
};
use tailprob::model::{HeadKind, ModelConfig, ModelWeights};
use tailprob::train::{train_ensemble, Round, TrainConfig};

fn quick_models(data: &Dataset, k: usize) -> Vec<ModelWeights> {
    let config = TrainConfig {
        rounds: vec![Round {
            epochs: 5,
            learning_rate: 1e-2,
        }],
        ensemble_size: k,
        ..Default::default()
    };
    let m = ModelConfig::new(data.schema().len(), HeadKind::Gmevm);
    train_ensemble(data, &m, &config, 1)
        .unwrap()
        .members
        .into_iter()
        .map(|(_, o)| o.weights)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip(
        rows in prop::collection::vec((1e-3f64..1e4, -1e3f64..1e3, 0u8..20), 1..60)
    ) {
        let samples: Vec<(f64, Vec<f64>)> = rows
            .iter()
            .map(|&(y, a, b)| (y, vec![a, f64::from(b)]))
            .collect();
        let spec = SyntheticSpec::mcs_sweep(&[1.0], 0, 0).unwrap();
        let base = generate_synthetic(&spec).unwrap();
        let d = Dataset::new(
            vec!["a".into(), "b".into()],
            samples
                .into_iter()
                .map(|(latency_ms, conditions)| tailprob::data::LatencySample { latency_ms, conditions })
                .collect(),
            base.meta().clone(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&d, &path).unwrap();
        let back = load_csv(&path, &CsvSchema::default()).unwrap();
        prop_assert_eq!(back.schema(), d.schema());
        prop_assert_eq!(back.samples(), d.samples());
    }

    #[test]
    fn bands_are_ordered(curves in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 8), 1..12)) {
        let grid: Vec<f64> = (0..8).map(f64::from).collect();
        let curves: Vec<CcdfCurve> = curves
            .into_iter()
            .map(|probs| CcdfCurve {
                label: String::new(),
                condition: vec![],
                grid: grid.clone(),
                probs,
                resolution: 0.0,
            })
            .collect();
        let b = ensemble_bands(&curves).unwrap();
        prop_assert!(b.is_ordered());
        for j in 0..grid.len() {
            let col: Vec<f64> = curves.iter().map(|c| c.probs[j]).collect();
            prop_assert_eq!(b.min[j], col.iter().copied().fold(f64::INFINITY, f64::min));
            prop_assert_eq!(b.max[j], col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
    }
}

#[test]
fn empirical_ccdf_converges_to_analytic() {
    let spec = SyntheticSpec::packet_length_sweep(&[172.0, 6880.0], 1_000_000, 12).unwrap();
    let theta = spec.grid[1].theta.clone();
    let single = SyntheticSpec {
        grid: vec![spec.grid[1].clone()],
        ..spec
    };
    let d = generate_synthetic(&single).unwrap();
    let ys: Vec<f64> = d.latencies().collect();
    let levels = [0.5, 1e-1, 1e-2, 1e-3, 1e-4];
    let grid: Vec<f64> = levels.iter().map(|&p| theta.upper_quantile(p).unwrap()).collect();
    let emp = empirical_ccdf(&ys, &grid).unwrap();
    let ana = analytic_ccdf(&theta, &grid).unwrap();
    let n = ys.len() as f64;
    for (e, a) in emp.probs.iter().zip(&ana.probs) {
        let sd = (a * (1.0 - a) / n).sqrt();
        assert!((e - a).abs() <= 3.0 * sd, "{e} vs {a}");
    }
}

#[test]
fn mcs_truth_quantiles_fall_with_index() {
    let spec = SyntheticSpec::mcs_sweep(&[3.0, 5.0, 7.0], 0, 0).unwrap();
    let q: Vec<f64> = spec
        .grid
        .iter()
        .map(|p| p.theta.quantile(1.0 - 1e-4).unwrap())
        .collect();
    assert!(q[0] > q[1] && q[1] > q[2], "{q:?}");
}

#[test]
fn predicted_curve_is_direct_composition() {
    let spec = SyntheticSpec::packet_length_sweep(&[172.0, 3440.0], 400, 1).unwrap();
    let d = generate_synthetic(&spec).unwrap();
    let m = &quick_models(&d, 1)[0];
    let grid: Vec<f64> = (0..50).map(|i| 2.0 + i as f64 * 0.3).collect();
    let c = predict_ccdf(m, &[3440.0], &grid).unwrap();
    let theta = m.predict(&[3440.0]).unwrap();
    for (y, p) in grid.iter().zip(&c.probs) {
        assert_eq!(*p, theta.ccdf(m.stats().normalize_latency(*y)));
    }
    assert!(c.is_monotone());
}

#[test]
fn report_round_trip_and_resolution() {
    let spec = SyntheticSpec::packet_length_sweep(&[172.0, 3440.0, 6880.0], 10_000, 2).unwrap();
    let d = generate_synthetic(&spec).unwrap();
    let (train_set, _) = split(&d, 0.1, 0).unwrap();
    let models = quick_models(&train_set, 3);

    let emp = evaluate(&models, Truth::Empirical(&d), &DEFAULT_LEVELS).unwrap();
    for c in &emp.conditions {
        assert_eq!(c.truth_samples, 10_000);
        assert!(c.band.is_ordered());
        assert!(c.truth.is_monotone());
        let avail: Vec<bool> = c.metrics.iter().map(|m| m.is_available()).collect();
        assert_eq!(avail, vec![true, true, true, false]);
    }
    let ana = evaluate(&models, Truth::Analytic(&spec), &DEFAULT_LEVELS).unwrap();
    for c in &ana.conditions {
        assert!(c.metrics.iter().all(|m| m.is_available() && m.log10_error.is_some()));
        assert_eq!(c.truth.len(), grid_levels(&DEFAULT_LEVELS).len());
    }
    assert!(ana.metric_definition.contains("constructed"));

    let dir = tempfile::tempdir().unwrap();
    ana.emit(dir.path()).unwrap();
    let back = EvaluationReport::load(dir.path().join("report.json")).unwrap();
    assert_eq!(back, ana);
    let band = std::fs::read_to_string(dir.path().join(&ana.conditions[0].band_csv)).unwrap();
    assert_eq!(band.lines().next(), Some("latency_ms,min,avg,max"));
    for line in band.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[1] <= v[2] && v[2] <= v[3]);
    }
}

#[test]
fn evaluation_rejects_mismatched_truth() {
    let spec = SyntheticSpec::packet_length_sweep(&[172.0, 3440.0], 200, 3).unwrap();
    let d = generate_synthetic(&spec).unwrap();
    let models = quick_models(&d, 1);
    let other = SyntheticSpec::mcs_sweep(&[3.0, 5.0], 10, 0).unwrap();
    assert!(evaluate(&models, Truth::Analytic(&other), &DEFAULT_LEVELS).is_err());
    assert!(evaluate(&[], Truth::Analytic(&spec), &DEFAULT_LEVELS).is_err());
}
