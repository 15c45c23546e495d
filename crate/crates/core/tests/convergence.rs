//! Observed orders of the implicit scheme.

use degenpde_core::verify::{check_convergence, convergence_study, StudyConfig};
use degenpde_core::{derive, ProblemParams};

fn heat() -> ProblemParams {
    // m = k = 1, p = 2, no source: u_t = u_xx
    ProblemParams {
        source: false,
        ..ProblemParams::default()
    }
}

#[test]
fn heat_limit_orders_are_two_and_one() {
    let d = derive(&heat()).unwrap();
    let base = StudyConfig {
        nodes: 40,
        dt: 1e-2,
        t_end: 1.5,
        radius: 8.0,
        interior: 1.0,
    };
    let st = convergence_study(&d, &base, 3).unwrap();
    println!("{st:?}");
    for r in &st.joint_ratios {
        assert!((3.0..=5.0).contains(r), "joint ratio {r}");
    }
    assert!((st.spatial_order - 2.0).abs() < 0.3, "{}", st.spatial_order);
    assert!(
        (st.temporal_order - 1.0).abs() < 0.2,
        "{}",
        st.temporal_order
    );
    assert!(check_convergence(&d, &base, 3).unwrap().passed());
}

#[test]
fn degenerate_run_keeps_interior_order() {
    let d = derive(&ProblemParams {
        m: 2.0,
        beta: 5.0,
        a: 0.5,
        ..ProblemParams::default()
    })
    .unwrap();
    let base = StudyConfig {
        nodes: 40,
        dt: 1e-2,
        t_end: 1.5,
        radius: 3.0,
        interior: 0.3,
    };
    let st = convergence_study(&d, &base, 3).unwrap();
    println!("{st:?}");
    assert!(st.spatial_order >= 1.5, "{st:?}");
}
