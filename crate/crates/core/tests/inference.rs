use gee2::estimators::*;
use gee2::inference::{
    sandwich_from_components, sandwich_variance, wald, NuisanceHandling, StackedEstimate,
};
use gee2::model::{ClusterData, Dataset, ModelSpec, ParameterVector, Target};
use gee2::simgen::{
    generate_dataset, marginal_truth, run_replicates, GenerationConfig, ReplicateEstimator,
};
use nalgebra::DMatrix;

fn fixture() -> (GenerationConfig, Dataset, PipelineSpecs) {
    let config = GenerationConfig {
        seed: 2,
        ..GenerationConfig::default().with_scale(300, 25, 35)
    };
    let data = generate_dataset(&config, 0).unwrap();
    let specs = PipelineSpecs::saturated(1, 3).unwrap();
    (config, data, specs)
}

#[test]
fn iid_intercept_sandwich_matches_closed_form() {
    let n = 400;
    let clusters = (0..n)
        .map(|i| {
            let y = (i * 37 + 11) % 10 < 3 + (i % 2) * 2;
            ClusterData::new(
                format!("s{i}"),
                i % 2 == 1,
                vec![],
                vec![],
                0,
                vec![Some(y)],
            )
            .unwrap()
        })
        .collect();
    let data = Dataset::new(clusters).unwrap();
    let spec = ModelSpec::conditional(Target::Outcome, vec![], vec![], vec![], vec![]).unwrap();
    let eq = ConditionalEquation::new(&data, &spec).unwrap();
    let mean = |arm: bool| {
        let ys: Vec<f64> = data
            .clusters()
            .iter()
            .filter(|c| c.treatment() == arm)
            .map(|c| f64::from(u8::from(c.y()[0].unwrap())))
            .collect();
        (ys.iter().sum::<f64>() / ys.len() as f64, ys.len() as f64)
    };
    let ((p0, n0), (p1, _)) = (mean(false), mean(true));
    let lg = |p: f64| (p / (1.0 - p)).ln();
    let theta = ParameterVector::new(vec![lg(p0), lg(p1) - lg(p0)], vec![0.0, 0.0]);

    let mut gamma = DMatrix::zeros(2, 2);
    let mut delta = DMatrix::zeros(2, 2);
    for i in 0..data.len() {
        let draw = Draw::full(eq.universe(i), eq.all_indices(i));
        let s = eq.cluster_score(i, &theta, &draw).unwrap();
        gamma += &s.h_beta;
        delta += &s.g_beta * s.g_beta.transpose();
    }
    let nf = n as f64;
    let cov = sandwich_from_components(&(gamma / nf), &(delta / nf), n).unwrap();
    let analytic = (1.0 / (n0 * p0 * (1.0 - p0))).sqrt();
    let se = cov[(0, 0)].sqrt();
    assert!((se / analytic - 1.0).abs() < 0.02, "{se} vs {analytic}");
}

fn stacked(fit: &PipelineFit) -> StackedEstimate {
    StackedEstimate {
        tm: fit.tm.fit.theta.clone(),
        psm: fit.psm.as_ref().map(|s| s.fit.theta.clone()),
        om: fit.om.as_ref().map(|s| s.fit.theta.clone()),
    }
}

#[test]
fn sandwich_is_symmetric_positive_semidefinite() {
    let (_, data, specs) = fixture();
    let options = PipelineOptions {
        sandwich: true,
        ..PipelineOptions::default()
    };
    let mut cache = NuisanceCache::new();
    for kind in EstimatorKind::ALL {
        let choice = EstimatorChoice::new(kind, SolverKind::Deterministic);
        let fit = run_pipeline_cached(&data, &specs, choice, &options, &mut cache).unwrap();
        let s = fit.sandwich.as_ref().expect("sandwich requested");
        let c = &s.covariance;
        assert_eq!(c, &c.transpose());
        let trace = c.trace();
        let min = c.clone().symmetric_eigen().eigenvalues.min();
        assert!(min >= -1e-10 * trace, "{kind}: min eigenvalue {min}");
        assert!(s.se.iter().all(|v| *v > 0.0 && v.is_finite()));
        assert_eq!(s.names[0], "TM.beta.(Intercept)");
    }
}

#[test]
fn nuisance_correction_changes_dr_standard_errors() {
    let (_, data, specs) = fixture();
    let choice = EstimatorChoice::new(EstimatorKind::DoublyRobust, SolverKind::Deterministic);
    let fit = run_pipeline(&data, &specs, choice, &PipelineOptions::default()).unwrap();
    let est = stacked(&fit);
    let kind = EstimatorKind::DoublyRobust;
    let full = sandwich_variance(
        &data,
        &specs,
        kind,
        &est,
        POSITIVITY_FLOOR,
        NuisanceHandling::Correct,
    )
    .unwrap();
    let naive = sandwich_variance(
        &data,
        &specs,
        kind,
        &est,
        POSITIVITY_FLOOR,
        NuisanceHandling::Ignore,
    )
    .unwrap();
    let rel = full
        .tm_se()
        .iter()
        .zip(naive.tm_se())
        .map(|(a, b)| (a / b - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(rel > 0.01, "largest relative SE change {rel}");
    assert_eq!(naive.se.len(), 4);
}

#[test]
fn sandwich_tracks_replicate_spread() {
    let config = GenerationConfig {
        seed: 8,
        ..GenerationConfig::default().with_scale(300, 25, 35)
    };
    let truth = marginal_truth(&config).unwrap().as_array();
    let est = ReplicateEstimator::new(&config, EstimatorKind::IpwG2, SolverKind::Deterministic)
        .unwrap()
        .with_sandwich(true);
    let summary = run_replicates(&config, truth, &[est], 100, &PipelineOptions::default()).unwrap();
    let row = &summary.rows[0];
    assert!(row.converged >= 80, "{} of 100 converged", row.converged);
    let sw = row.sandwich_se.unwrap();
    for k in 0..4 {
        let ratio = sw[k] / row.replicate_se[k];
        assert!(
            (0.8..=1.25).contains(&ratio),
            "parameter {k}: ratio {ratio}"
        );
    }
}

#[test]
fn wald_statistics() {
    let w = wald(0.0, 1.0, None).unwrap();
    assert_eq!((w.statistic, w.p_value), (0.0, 1.0));
    let w = wald(0.0349, 0.0245, Some(1000)).unwrap();
    assert!(w.flagged && (w.statistic - 45.05).abs() < 0.1);
    let w = wald(1.959964, 1.0, None).unwrap();
    assert!((w.p_value - 0.05).abs() < 1e-6);
    assert!(wald(1.0, 0.0, None).is_err());
}
