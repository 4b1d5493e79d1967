//! Shared fixtures for the criterion benches.

use lossyckpt::{LinearSystem, Method, SolveConfig, SolverState};

/// A smooth field: two superposed sines.
pub fn smooth_field(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            (6.0 * t).sin() + 0.1 * (97.0 * t).sin()
        })
        .collect()
}

/// A CG iterate on poisson2d(m) after `steps` iterations.
pub fn solver_iterate(m: usize, steps: usize) -> Vec<f64> {
    let sys = LinearSystem::poisson2d(m).expect("m >= 2");
    let mut s = SolverState::init(Method::Cg, &sys, SolveConfig::new(1e-14, steps + 1, steps + 1)).expect("valid config");
    for _ in 0..steps {
        if s.converged() {
            break;
        }
        s.step(&sys).expect("cg step");
    }
    s.solution().into_owned()
}
