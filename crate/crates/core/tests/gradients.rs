mod common;

use common::{gradcheck, FD_TOL};

fn over_instances(name: &str, check: fn(u64) -> f64, tol: f64) {
    for seed in 0..20 {
        let worst = check(seed);
        assert!(worst <= tol, "{name} seed {seed}: relative error {worst:.3e}");
    }
}

#[test]
fn conv_matches_finite_differences() {
    over_instances("conv", gradcheck::conv, FD_TOL);
}

#[test]
fn maxpool_matches_finite_differences() {
    over_instances("maxpool", gradcheck::maxpool, FD_TOL);
}

#[test]
fn relu_matches_finite_differences() {
    over_instances("relu", gradcheck::relu, 1e-3);
}

#[test]
fn linear_matches_finite_differences() {
    over_instances("linear", gradcheck::linear, FD_TOL);
}

#[test]
fn global_pool_matches_finite_differences() {
    over_instances("global pool", gradcheck::global_pool, FD_TOL);
}

#[test]
fn residual_matches_finite_differences() {
    over_instances("residual", gradcheck::residual, FD_TOL);
}

#[test]
fn toy_network_matches_finite_differences() {
    over_instances("toy network", gradcheck::toy_network, FD_TOL);
}
