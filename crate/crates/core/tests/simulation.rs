use doc_coord_core::certificates::{verify_certificate, FeasibilitySettings};
use doc_coord_core::{
    build_lmi, cross_check_transformed, simulate, solve_feasibility, solve_reference_point,
    tail_metrics, AgentNonlinearities, InputNonlinearity, Scenario, SimConfig,
};

fn short_run(scenario: &Scenario, t_final: f64, dt: f64, stride: usize) -> SimConfig {
    SimConfig {
        t_final,
        dt,
        record_stride: stride,
        tail_window: (0.0, t_final),
        ..scenario.sim.clone()
    }
}

#[test]
fn halving_the_step_changes_little() {
    let scenario = Scenario::reference();
    let system = scenario.system().unwrap();
    let coarse = simulate(&system, &short_run(&scenario, 10.0, 1e-3, 1)).unwrap();
    let fine = simulate(&system, &short_run(&scenario, 10.0, 5e-4, 2)).unwrap();
    assert_eq!(coarse.len(), fine.len());
    let mut worst: f64 = 0.0;
    for (a, b) in coarse.states.iter().zip(&fine.states) {
        worst = worst.max((a.to_vector() - b.to_vector()).amax());
    }
    for (ta, tb) in coarse.times.iter().zip(&fine.times) {
        assert!((ta - tb).abs() < 1e-12);
    }
    assert!(worst <= 1e-5, "step refinement deviation {worst:e}");
}

#[test]
fn same_seed_gives_identical_trajectories() {
    let scenario = Scenario::reference();
    let system = scenario.system().unwrap();
    let cfg = short_run(&scenario, 5.0, 1e-3, 10);
    let a = simulate(&system, &cfg).unwrap();
    let b = simulate(&system, &cfg).unwrap();
    assert_eq!(a.times, b.times);
    assert_eq!(a.err, b.err);
    for (x, y) in a.states.iter().zip(&b.states) {
        assert_eq!(x.to_vector(), y.to_vector());
    }
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);

    let other = simulate(
        &system,
        &SimConfig {
            rng_seed: cfg.rng_seed + 1,
            ..cfg
        },
    )
    .unwrap();
    assert_ne!(a.states[0].x, other.states[0].x);
}

#[test]
fn perturbed_reference_breaks_the_cross_check() {
    let scenario = Scenario::reference();
    let system = scenario.system().unwrap();
    let spectrum = scenario.graph.spectrum().unwrap();
    let mut reference = solve_reference_point(
        &scenario.model,
        &scenario.bounds(),
        &scenario.objectives,
        scenario.require_gains().unwrap(),
    )
    .unwrap();
    let initial = scenario.sim.initial_state(5, 2).unwrap();
    let exact =
        cross_check_transformed(&system, &spectrum, &reference, &initial, 10.0, 1e-3).unwrap();
    assert!(exact.max_deviation <= 1e-6, "{}", exact.max_deviation);

    reference.u_bar.add_scalar_mut(0.1);
    let wrong =
        cross_check_transformed(&system, &spectrum, &reference, &initial, 10.0, 1e-3).unwrap();
    assert!(wrong.max_deviation > 1e-3, "{}", wrong.max_deviation);
}

#[test]
fn linear_input_at_reference_has_no_deviation() {
    let base = Scenario::reference();
    let scenario = Scenario {
        nonlinearities: AgentNonlinearities::homogeneous(InputNonlinearity::identity(), 5),
        ..base
    };
    let system = scenario.system().unwrap();
    let spectrum = scenario.graph.spectrum().unwrap();
    let reference = solve_reference_point(
        &scenario.model,
        &scenario.bounds(),
        &scenario.objectives,
        scenario.require_gains().unwrap(),
    )
    .unwrap();
    let check = cross_check_transformed(
        &system,
        &spectrum,
        &reference,
        &reference.as_state(),
        2.0,
        1e-3,
    )
    .unwrap();
    assert!(check.max_deviation < 1e-10, "{}", check.max_deviation);
}

#[test]
fn exact_coordination_error_keeps_shrinking() {
    let base = Scenario::reference();
    let scenario = Scenario {
        nonlinearities: AgentNonlinearities::homogeneous(InputNonlinearity::identity(), 5),
        ..base
    };
    let gains = scenario.require_gains().unwrap();
    let spectrum = scenario.graph.spectrum().unwrap();
    let prob = build_lmi(
        &scenario.model,
        &scenario.bounds(),
        &scenario.objectives,
        &spectrum,
        gains,
    )
    .unwrap();
    assert_eq!(prob.gamma(), 0.0);
    let cert = solve_feasibility(&prob, &FeasibilitySettings::default()).unwrap();
    assert!(verify_certificate(&prob, &cert).unwrap().pass);

    let traj = simulate(&scenario.system().unwrap(), &scenario.sim).unwrap();
    let means: Vec<f64> = [(20.0, 30.0), (30.0, 40.0), (40.0, 50.0)]
        .iter()
        .map(|&w| tail_metrics(&traj, w).unwrap().mean_err)
        .collect();
    assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
}
