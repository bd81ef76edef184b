use infogreedy::harness::{
    run_experiment, simulate, summarize, trial_results, ExperimentConfig, MismatchModel, PolicySpec, Spectrum,
};

#[test]
fn different_master_seeds_agree_within_sampling_error() {
    let a = ExperimentConfig::rank_one_comparison(500, 20, 100, 1);
    let mut b = a.clone();
    b.master_seed = 2;
    let sa = summarize(&a, &simulate(&a).unwrap());
    let sb = summarize(&b, &simulate(&b).unwrap());
    for (pa, pb) in sa.policies.iter().zip(&sb.policies) {
        let se = (pa.error.se.powi(2) + pb.error.se.powi(2)).sqrt();
        let diff = (pa.error.mean - pb.error.mean).abs();
        assert!(
            diff <= 3.0 * se,
            "{}: |{} − {}| > 3·{se}",
            pa.policy,
            pa.error.mean,
            pb.error.mean
        );
    }
}

fn small(mismatch: MismatchModel) -> ExperimentConfig {
    let mut c = ExperimentConfig::rank_one_comparison(8, 4, 4, 9);
    c.s = 2;
    c.eigen_spectrum = Spectrum::Geometric { first: 5.0, ratio: 0.5 };
    c.mismatch = mismatch;
    c.max_steps = None;
    c.policies = vec![
        PolicySpec::InfoGreedy,
        PolicySpec::Batch { k: 3 },
        PolicySpec::Random { k: 3 },
    ];
    c
}

#[test]
fn every_mismatch_model_runs() {
    let models = [
        MismatchModel::None,
        MismatchModel::RankOnePerturb { scale: 0.1 },
        MismatchModel::SampleCov { samples: 50 },
        MismatchModel::Sketch {
            m: 64,
            n_samples: 200,
            l: 2,
            sigma2: 0.01,
            tau: None,
            solver: None,
        },
    ];
    for m in models {
        let c = small(m.clone());
        let outcomes = simulate(&c).unwrap();
        let rows = trial_results(&c, &outcomes);
        assert_eq!(rows.len(), 4 * 3, "{m:?}");
        for r in &rows {
            assert!(r.error.is_finite() && r.error >= 0.0, "{m:?}: {r:?}");
            assert!(r.delta_final.is_finite());
        }
        let sketched = outcomes.iter().filter(|o| o.sketch.is_some()).count();
        assert_eq!(sketched > 0, matches!(m, MismatchModel::Sketch { .. }));
    }
}

#[test]
fn sample_covariance_mismatch_shrinks_with_more_samples() {
    let few = small(MismatchModel::SampleCov { samples: 10 });
    let many = small(MismatchModel::SampleCov { samples: 10_000 });
    let d = |c: &ExperimentConfig| {
        (0..c.trials)
            .map(|t| infogreedy::harness::TrialSetup::new(c, t).unwrap().delta0().unwrap())
            .sum::<f64>()
    };
    assert!(d(&many) < 0.2 * d(&few));
}

#[test]
fn summary_and_plotdata_match_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(MismatchModel::RankOnePerturb { scale: 0.5 });
    c.output_dir = dir.path().to_path_buf();
    let out = run_experiment(&c).unwrap();
    let text = std::fs::read_to_string(&out.summary_json).unwrap();
    let back: infogreedy::harness::ExperimentSummary = serde_json::from_str(&text).unwrap();
    assert_eq!(back, out.summary);

    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let ig_errors: Vec<f64> = csv
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) == Some("info_greedy"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let mean = ig_errors.iter().sum::<f64>() / ig_errors.len() as f64;
    assert!((back.policy("info_greedy").unwrap().error.mean - mean).abs() < 1e-12);

    let plot = std::fs::read_to_string(dir.path().join("plotdata/random.csv")).unwrap();
    let mut lines = plot.lines();
    assert_eq!(lines.next(), Some("measurement,mean_error,mean_normalized_error"));
    assert_eq!(lines.count(), 4);
}
