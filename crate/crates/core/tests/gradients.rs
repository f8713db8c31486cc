//! Analytic gradients against central finite differences.

mod common;

use common::gradcheck::{self, SEEDS, TOL};

fn check_all_seeds(name: &str, check: gradcheck::Check) {
    for seed in 0..SEEDS {
        let err = check(seed);
        assert!(err < TOL, "{name} (seed {seed}): relative error {err:.3e}");
    }
}

#[test]
fn ntxent_gradient() {
    check_all_seeds("ntxent", gradcheck::ntxent);
}

#[test]
fn cross_entropy_gradient() {
    check_all_seeds("cross-entropy", gradcheck::cross_entropy_check);
}

#[test]
fn fixmatch_and_uda_gradients() {
    check_all_seeds("fixmatch", gradcheck::fixmatch);
    check_all_seeds("uda", gradcheck::uda);
}

#[test]
fn consistency_gradient() {
    check_all_seeds("cr consistency", gradcheck::consistency);
}

#[test]
fn fedprox_gradient() {
    check_all_seeds("fedprox", gradcheck::fedprox);
}

#[test]
fn encoder_gradient_with_dropout() {
    check_all_seeds("encoder", gradcheck::encoder_with_dropout);
}

#[test]
fn projector_gradient_with_batch_norm() {
    check_all_seeds("projector", gradcheck::projector_with_batch_norm);
}

#[test]
fn classifier_gradient() {
    check_all_seeds("classifier", gradcheck::classifier);
}

#[test]
fn contrastive_pipeline_gradient() {
    check_all_seeds("contrastive pipeline", gradcheck::contrastive_pipeline);
}

#[test]
fn default_network_spot_check() {
    for seed in [7, 8, 9] {
        let err = gradcheck::default_network(seed);
        assert!(err < TOL, "default network (seed {seed}): relative error {err:.3e}");
    }
}

#[test]
fn every_check_is_listed() {
    assert_eq!(gradcheck::CHECKS.len(), 11);
}
