mod common;

use common::{conv_check, op_checks, SEEDS};
use mattekit::gradcheck::TOLERANCE;

fn run(name: &str) {
    let op = op_checks().into_iter().find(|o| o.name == name).unwrap();
    for seed in 0..SEEDS {
        let c = (op.run)(seed);
        assert!(c.passes(TOLERANCE), "{name} seed {seed}: {c:?}");
    }
}

#[test]
fn conv2d_gradients() {
    run("conv2d");
}

#[test]
fn maxpool_gradients() {
    run("maxpool2d");
}

#[test]
fn bilinear_gradients() {
    run("bilinear_resize");
}

#[test]
fn softmax_gradients() {
    run("softmax");
}

#[test]
fn feathering_gradients() {
    run("feathering");
}

#[test]
fn loss_gradients() {
    run("loss_alpha");
    run("loss_color");
    run("cross_entropy");
}

#[test]
fn segnet_gradients() {
    run("segnet");
}

#[test]
fn harness_flags_a_doubled_weight_gradient() {
    for seed in 0..5 {
        let c = conv_check(seed, 2.0);
        assert!(c.max_rel_error > 0.1, "seed {seed}: {c:?}");
    }
}
