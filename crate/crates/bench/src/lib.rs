//! Shared fixtures for the benches.

use degenpde_core::{ProblemParams, SolverConfig};

/// Slow diffusion with a supercritical source, `a = 0.5`.
pub fn e2() -> ProblemParams {
    ProblemParams {
        m: 2.0,
        beta: 5.0,
        a: 0.5,
        ..ProblemParams::default()
    }
}

/// Two-dimensional, `p = 4`, variable density, no source.
pub fn f2a() -> ProblemParams {
    ProblemParams {
        m: 3.0,
        k: 3.2,
        p: 4.0,
        n: 0.2,
        n1: 1.0,
        beta: 1.3,
        dim: 2,
        source: false,
        ..ProblemParams::default()
    }
}

pub fn short_run(nodes: usize) -> SolverConfig {
    SolverConfig {
        nodes,
        t_end: 1.1,
        ..SolverConfig::default()
    }
}
