mod common;

use common::mc::*;
use gee2::estimators::{
    fit_equation, IpwMode, OmPredictions, PsmPredictions, ScoringControls, TreatmentEquation,
    POSITIVITY_FLOOR,
};
use gee2::model::{ModelSpec, ParameterVector, Target};
use gee2::simgen::{generate_dataset, GenerationConfig};
use gee2::stochastic::{run_chain, LearningRate, SamplingPlan, ZetaVariant};

#[test]
fn subsampled_ipw_score_and_information_are_unbiased() {
    let (data, psm, _) = frozen();
    let eq = TreatmentEquation::ipw(&data, IpwMode::G2, psm).unwrap();
    let z = unbiased_z(&eq, 1);
    assert!(z <= 3.0, "worst |z| {z}");
}

#[test]
fn subsampled_dr_score_and_information_are_unbiased() {
    let (data, psm, om) = frozen();
    let eq = TreatmentEquation::doubly_robust(&data, IpwMode::G2, psm, om).unwrap();
    let z = unbiased_z(&eq, 2);
    assert!(z <= 3.0, "worst |z| {z}");
}

#[test]
fn complete_case_subsampling_is_unbiased() {
    let (data, _, _) = frozen();
    let eq = TreatmentEquation::complete_case(&data).unwrap();
    let z = unbiased_z(&eq, 3);
    assert!(z <= 3.0, "worst |z| {z}");
}

#[test]
fn independent_sample_zeta_is_unbiased() {
    let (data, psm, om) = frozen();
    let z = zeta_z(&data, psm, om, ZetaVariant::Z3, 4);
    assert!(z <= 3.0, "worst |z| {z}");
}

#[test]
fn observed_sample_zetas_are_biased_under_informative_missingness() {
    let (data, (ps, pt), (os, ot)) = informative_fixture();
    let psm = PsmPredictions::new(&data, &ps, &pt, POSITIVITY_FLOOR).unwrap();
    let om = OmPredictions::new(&data, &os, &ot).unwrap();
    for (variant, seed) in [(ZetaVariant::Z1, 5), (ZetaVariant::Z2, 6)] {
        let z = zeta_z(&data, psm.clone(), om.clone(), variant, seed);
        assert!(z > 5.0, "{variant:?}: worst |z| {z}");
    }
    let z = zeta_z(&data, psm, om, ZetaVariant::Z3, 7);
    assert!(z <= 3.0, "Z3 on the informative fixture: {z}");
}

#[test]
fn full_sampling_with_unit_rate_reproduces_fisher_scoring() {
    let config = GenerationConfig {
        seed: 5,
        ..GenerationConfig::default().with_scale(30, 10, 20)
    };
    let data = generate_dataset(&config, 0).unwrap();
    let (psm_spec, psm_theta) = config
        .missingness
        .as_ref()
        .unwrap()
        .coefficients
        .to_model(Target::Propensity)
        .unwrap();
    let (om_spec, om_theta) = config
        .outcome
        .coefficients
        .to_model(Target::Outcome)
        .unwrap();
    let psm = PsmPredictions::new(&data, &psm_spec, &psm_theta, POSITIVITY_FLOOR).unwrap();
    let om = OmPredictions::new(&data, &om_spec, &om_theta).unwrap();
    let equations = [
        TreatmentEquation::complete_case(&data).unwrap(),
        TreatmentEquation::ipw(&data, IpwMode::G2, psm.clone()).unwrap(),
        TreatmentEquation::doubly_robust(&data, IpwMode::G2, psm, om).unwrap(),
    ];
    let plan = SamplingPlan {
        pi_s: 1.0,
        gamma: LearningRate::Constant { value: 1.0 },
        record_trace: true,
        ..SamplingPlan::default()
    };
    let controls = ScoringControls {
        record_trace: true,
        tol: 0.0,
        max_iter: 6,
        ..ScoringControls::default()
    };
    let theta0 = ParameterVector::zeros(&ModelSpec::canonical_tm());
    for eq in &equations {
        let det = fit_equation(eq, theta0.clone(), &controls).unwrap();
        let sto = run_chain(eq, theta0.clone(), &plan, 6, 0);
        let trace = sto.trace.unwrap();
        assert_eq!(trace.len(), det.trace.len());
        for (a, b) in trace.iter().zip(&det.trace) {
            for (x, y) in a.stacked().iter().zip(b.stacked().iter()) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
            }
        }
    }
}
