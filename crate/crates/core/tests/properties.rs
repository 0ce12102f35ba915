use doc_coord_core::graph::Edge;
use doc_coord_core::linalg::{spectral_norm, Mat, Vector};
use doc_coord_core::objectives::LocalObjective;
use doc_coord_core::{
    build_lmi, AgentNonlinearities, ClosedLoopState, InputNonlinearity, NetworkGraph,
    NonlinearityKind, ObjectiveSet, QuadraticObjective, Scenario, SectorBounds, TransformedSystem,
};
use proptest::prelude::*;

/// A random spanning tree plus a random subset of extra edges, all with
/// positive weights.
fn connected_graph() -> impl Strategy<Value = NetworkGraph> {
    (2usize..8).prop_flat_map(|n| {
        let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
        let extra = proptest::collection::vec(any::<bool>(), n * n);
        let weights = proptest::collection::vec(0.1f64..5.0, n * n);
        (Just(n), parents, extra, weights).prop_map(|(n, parents, extra, weights)| {
            let mut edges = Vec::new();
            for (i, &p) in parents.iter().enumerate() {
                edges.push(Edge {
                    a: p,
                    b: i + 1,
                    weight: weights[i],
                });
            }
            for a in 0..n {
                for b in a + 1..n {
                    let tree = parents[b - 1] == a;
                    if !tree && extra[a * n + b] {
                        edges.push(Edge {
                            a,
                            b,
                            weight: weights[a * n + b],
                        });
                    }
                }
            }
            NetworkGraph::new(n, edges).unwrap()
        })
    })
}

fn vector(len: usize, range: f64) -> impl Strategy<Value = Vector> {
    proptest::collection::vec(-range..range, len).prop_map(Vector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 64,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn laplacian_structure(g in connected_graph()) {
        let spec = g.spectrum().unwrap();
        let l = &spec.laplacian;
        let n = g.num_agents();
        for i in 0..n {
            prop_assert!(l.row(i).sum().abs() <= 1e-12);
            for j in 0..n {
                prop_assert_eq!(l[(i, j)], l[(j, i)]);
            }
        }
        prop_assert!(spec.eigenvalues.iter().all(|&e| e >= -1e-10));
        prop_assert!(spec.lambda2() > 0.0);
        prop_assert!((spectral_norm(&spec.basis) - 1.0).abs() <= 1e-10);
        let rebuilt = &spec.basis
            * Mat::from_diagonal(&Vector::from_column_slice(&spec.eigenvalues))
            * spec.basis.transpose();
        prop_assert!((rebuilt - l).amax() <= 1e-8);
    }

    #[test]
    fn input_decomposition_is_exact(
        base in 0.4f64..0.9,
        amp in 0.0f64..0.1,
        u in vector(2, 10.0),
        t in 0.0f64..20.0,
        b0 in proptest::collection::vec(-3.0f64..3.0, 4),
    ) {
        let beta = base + amp;
        let bounds = SectorBounds::new(base - amp, beta, None).unwrap();
        let nl = InputNonlinearity::new(
            NonlinearityKind::SinusoidalGain { base, amp, freq: 2.0 },
            bounds,
        ).unwrap();
        let b0 = Mat::from_row_slice(2, 2, &b0);
        let b = &b0 * beta;
        let lhs = &b0 * nl.apply(&u, t).unwrap();
        let rhs = &b * &u - &b * nl.residual(&u, t).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-12 * (1.0 + u.amax()) * 10.0);
    }

    #[test]
    fn quadratic_gradients_and_constants(
        entries in proptest::collection::vec(-1.0f64..1.0, 4),
        shift in 0.5f64..2.0,
        center in vector(2, 3.0),
        x in vector(2, 5.0),
        y in vector(2, 5.0),
    ) {
        let m = Mat::from_row_slice(2, 2, &entries);
        let h = &m * m.transpose() + Mat::identity(2, 2) * shift;
        let f = QuadraticObjective::new(h, center).unwrap();
        let (mu, ell) = f.eigen_bounds();
        let dg = f.gradient(&y) - f.gradient(&x);
        let dx = &y - &x;
        let inner = dg.dot(&dx);
        prop_assert!(inner >= mu * dx.norm_squared() - 1e-10);
        prop_assert!(inner <= ell * dx.norm_squared() + 1e-10);

        let step = 1e-6;
        let g = f.gradient(&x);
        for k in 0..2 {
            let mut e = Vector::zeros(2);
            e[k] = step;
            let fd = (f.value(&(&x + &e)) - f.value(&(&x - &e))) / (2.0 * step);
            prop_assert!((fd - g[k]).abs() <= 1e-5 * g.norm().max(1.0));
        }
    }

    #[test]
    fn optimizer_is_stationary(centers in proptest::collection::vec(vector(2, 3.0), 3)) {
        let locals = centers
            .into_iter()
            .enumerate()
            .map(|(i, c)| QuadraticObjective::isotropic(1.0 + 0.5 * i as f64, c).unwrap())
            .collect();
        let objs = ObjectiveSet::quadratic(locals, None, None).unwrap();
        let z = objs.solve_global_optimizer().unwrap();
        prop_assert!(objs.global_gradient(&z).amax() <= 1e-10);
    }

    #[test]
    fn lmi_blocks_are_affine_in_lambda(
        la in 0.1f64..10.0,
        lb in 0.1f64..10.0,
        p_entries in proptest::collection::vec(-1.0f64..1.0, 64),
    ) {
        let scenario = Scenario::reference();
        let spectrum = scenario.graph.spectrum().unwrap();
        let prob = build_lmi(
            &scenario.model,
            &scenario.bounds(),
            &scenario.objectives,
            &spectrum,
            scenario.require_gains().unwrap(),
        ).unwrap();
        let m = Mat::from_row_slice(8, 8, &p_entries);
        let p = &m * m.transpose() + Mat::identity(8, 8);
        let mid = prob.i_block(&p, 0.5 * (la + lb), 0.0);
        let avg = (prob.i_block(&p, la, 0.0) + prob.i_block(&p, lb, 0.0)) * 0.5;
        prop_assert!((mid - avg).amax() <= 1e-9 * (1.0 + la + lb) * p.amax());
    }

    #[test]
    fn project_and_lift_invert_on_zero_v_sum(s in vector(40, 3.0)) {
        let scenario = Scenario::reference();
        let system = scenario.system().unwrap();
        let spectrum = scenario.graph.spectrum().unwrap();
        let reference = doc_coord_core::solve_reference_point(
            &scenario.model,
            &scenario.bounds(),
            &scenario.objectives,
            scenario.require_gains().unwrap(),
        ).unwrap();
        let map = TransformedSystem::new(system, &spectrum, &reference).unwrap();
        let mut state = ClosedLoopState::from_vector(&s);
        let mean = state.v_sum(2) / 5.0;
        for i in 0..5 {
            let mut vi = state.v.rows_mut(2 * i, 2);
            vi -= &mean;
        }
        let back = map.lift(&map.project(&state)).to_vector();
        prop_assert!((back - state.to_vector()).amax() <= 1e-10);
    }

    #[test]
    fn controller_conserves_v_sum(
        g in connected_graph(),
        seed in vector(64, 3.0),
        t in 0.0f64..10.0,
    ) {
        let n_agents = g.num_agents();
        let scenario = Scenario::reference();
        let locals = (0..n_agents)
            .map(|i| QuadraticObjective::isotropic(1.1, Vector::from_vec(vec![i as f64, -1.0])).unwrap())
            .collect();
        let objs = ObjectiveSet::quadratic(locals, Some(1.0), Some(1.1)).unwrap();
        let nls = AgentNonlinearities::homogeneous(scenario.nonlinearities.agent(0).clone(), n_agents);
        let gains = scenario.require_gains().unwrap();
        let system = doc_coord_core::CoordinationSystem::new(
            &scenario.model, &nls, &g, &objs, gains,
        ).unwrap();
        let dim = system.closed_loop_dim();
        let s = Vector::from_iterator(dim, (0..dim).map(|k| seed[k % 64] * (1.0 + k as f64 / 64.0)));
        let ds = system.derivative(t, &s).unwrap();
        let v_dot = ClosedLoopState::from_vector(&ds).v_sum(2);
        prop_assert!(v_dot.amax() <= 1e-10 * (1.0 + s.amax()));
    }
}
