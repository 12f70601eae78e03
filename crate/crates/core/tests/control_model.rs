use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use stratahjb::config::ProblemConfig;
use stratahjb::control::*;
use stratahjb::stratification::{Hyperplane, Stratification};
use stratahjb::Error;

fn builtin(name: &str) -> ControlProblem<f64> {
    ProblemConfig::builtin(name).unwrap().build().unwrap()
}

fn control_index(p: &ControlProblem<f64>, a: &[f64]) -> usize {
    p.controls
        .samples()
        .iter()
        .position(|s| s.iter().zip(a).all(|(u, v)| (u - v).abs() < 1e-12))
        .unwrap()
}

/// Problem with l = 1 everywhere and zero dynamics.
fn unit_cost_problem() -> ControlProblem<f64> {
    let strat = Stratification::new(2, vec![Hyperplane::new(0, 0.0)]).unwrap();
    let piece = Piece::new(VelocityFamily::Constant(vec![0.0, 0.0]), CostFamily::Constant(1.0));
    ControlProblem::new(
        "unit-cost",
        strat,
        ControlSet::ball(2, 1.0, 8).unwrap(),
        vec![Some(piece.clone()), Some(piece.clone()), Some(piece)],
        TerminalCost::Constant(0.0),
        TerminalMode::Lipschitz,
        GrowthConstants { c_f: 1.0, c_l: 1.0, lambda_l: 1.0, lambda_phi: 1.0 },
        1.0,
    )
    .unwrap()
}

#[test]
fn eval_f_example_e_fast_cell() {
    let p = builtin("exampleE");
    let a = control_index(&p, &[-1.0, 0.0]);
    let omega2 = p.strat.locate(&[0.5, 0.0]);
    assert_eq!(p.eval_f(omega2, &[0.5, 0.3], a).unwrap(), vec![-2.0, 0.0]);
}

#[test]
fn unit_cost_slack() {
    let p = unit_cost_problem();
    let x = [3.0, 4.0];
    assert_eq!(p.eval_l(0, &x, 0).unwrap(), 1.0);
    assert_abs_diff_eq!(p.eval_b(0, &x, 0).unwrap(), 1.0 * (1.0 + 5.0) - 1.0, epsilon = 1e-12);
}

#[test]
fn saturated_cost_has_zero_slack() {
    let mut p = unit_cost_problem();
    // l(x) = 1 + |x| equals c_l (1 + |x|^1)
    for piece in p.pieces.iter_mut().flatten() {
        piece.cost = CostFamily::Polynomial(vec![1.0, 1.0]);
    }
    assert_eq!(p.eval_b(2, &[0.6, 0.8], 0).unwrap(), 0.0);
}

#[test]
fn growth_violation_and_missing_piece() {
    let mut p = unit_cost_problem();
    p.pieces[0].as_mut().unwrap().cost = CostFamily::Constant(5.0);
    assert!(matches!(p.eval_l(0, &[-1.0, 0.0], 0), Err(Error::GrowthViolation(_))));
    p.pieces[0].as_mut().unwrap().velocity = VelocityFamily::Constant(vec![3.0, 0.0]);
    assert!(matches!(p.eval_f(0, &[0.0, 0.0], 0), Err(Error::GrowthViolation(_))));
    p.pieces[1] = None;
    assert!(matches!(p.eval_f(1, &[0.0, 0.0], 0), Err(Error::StratumPieceMissing(1))));
    assert!(matches!(p.require_all_pieces(), Err(Error::StratumPieceMissing(1))));
}

#[test]
fn tangential_controls_examples() {
    let a = builtin("exampleA");
    let tan = a.tangential_controls(&[0.0, 0.7]).unwrap();
    assert_eq!(tan.len(), 1);
    assert_eq!(a.controls.sample(tan[0]), &[0.0]);

    let b = builtin("exampleB");
    assert!(b.tangential_controls(&[0.0]).unwrap().is_empty());

    let e = builtin("exampleE");
    assert_eq!(e.tangential_controls(&[0.4, -1.0]).unwrap().len(), e.controls.len());
}

#[test]
fn essential_velocities_example_a() {
    let p = builtin("exampleA");
    let mut vels = p.essential_velocities(&[0.0, 0.3]).unwrap();
    vels.sort_by(|u, v| u[0].total_cmp(&v[0]));
    vels.dedup();
    assert_eq!(vels, vec![vec![-1.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]]);
    let feas = p.essential_controls(&[0.5, 0.0]).unwrap();
    assert_eq!(feas.essential.len(), 1);
    assert_eq!(feas.len(), p.controls.len());
}

#[test]
fn essential_controls_example_e_half_spaces() {
    let p = builtin("exampleE");
    let x = [0.0, 0.2];
    let feas = p.essential_controls(&x).unwrap();
    let (o1, g, o2) = (0, 1, 2);
    assert_eq!(p.strat.locate(&x), g);
    for (k, sign) in [(o1, -1.0), (o2, 1.0)] {
        let admitted = feas.essential_of(k);
        for (i, a) in p.controls.samples().iter().enumerate() {
            assert_eq!(admitted.contains(&i), sign * a[0] >= 0.0, "stratum {k} control {a:?}");
        }
    }
    let tan: Vec<usize> = feas.essential_of(g).to_vec();
    assert_eq!(tan, feas.tangential);
    for &i in &tan {
        assert_eq!(p.controls.sample(i)[0], 0.0);
    }
    assert_eq!(tan.len(), 3);
}

#[test]
fn augmented_mirrors_essential() {
    let p = builtin("exampleA");
    let aug = p.augmented_essential(&[0.0, 0.3]).unwrap();
    let feas = p.essential_controls(&[0.0, 0.3]).unwrap();
    assert_eq!(aug.len(), 2 * feas.len());
    for g in &aug {
        assert!(g.r >= 0.0);
        assert_abs_diff_eq!(g.w, -0.0 - g.r, epsilon = 1e-15);
    }
}

#[test]
fn tangentialize_examples() {
    let e = builtin("exampleE");
    let x = [0.0, 0.5];
    let a = control_index(&e, &[1.0, 0.0]);
    match e.tangentialize_control(&x, a).unwrap() {
        Tangentialized::Mixed { velocity, weights, partner, .. } => {
            assert!(velocity[0].abs() < 1e-12);
            let b = partner.unwrap();
            assert_eq!(e.controls.sample(b), &[-1.0, 0.0]);
            // beta = gamma = 2: equal weights
            assert_abs_diff_eq!(weights.0, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(weights.1, 0.5, epsilon = 1e-12);
        }
        other => panic!("unexpected {other:?}"),
    }
    let t = control_index(&e, &[0.0, 1.0]);
    assert_eq!(
        e.tangentialize_control(&x, t).unwrap(),
        Tangentialized::Mixed { velocity: vec![0.0, 2.0], cost_rate: 0.0, partner: None, weights: (1.0, 0.0) }
    );
    assert!(matches!(e.tangentialize_control(&[0.3, 0.5], a), Err(Error::NotOnInterface)));

    let b = builtin("exampleB");
    assert_eq!(b.tangentialize_control(&[0.0], 0).unwrap(), Tangentialized::Infeasible);
}

#[test]
fn controllability_examples() {
    let e = builtin("exampleE");
    let rep = e.check_controllability(ControllabilityMode::H2, 40, -2.0, 2.0, 1).unwrap();
    assert!(rep.holds);
    let r = rep.min_radius();
    assert!((r - 1.0).abs() <= 0.15, "radius {r}");

    let b = builtin("exampleB");
    let rep = b.check_controllability(ControllabilityMode::H3, 10, -2.0, 2.0, 1).unwrap();
    assert!(rep.holds);
    assert_eq!(rep.strata[0].verdict, Verdict::EmptyTangential);
    let rep = b.check_controllability(ControllabilityMode::H2, 10, -2.0, 2.0, 1).unwrap();
    assert!(!rep.holds);

    let a = builtin("exampleA");
    let rep = a.check_controllability(ControllabilityMode::H2, 10, -2.0, 2.0, 1).unwrap();
    assert!(!rep.holds);
    assert_eq!(rep.strata[0].verdict, Verdict::Violated);
    assert!(!rep.tangential_holds());
}

#[test]
fn terminal_one_sided_limits() {
    let f = builtin("exampleF");
    assert_eq!(f.terminal_at(&[0.0]), 0.0);
    assert_eq!(f.terminal_limit(&[0.0], &[1]), 1.0);
    assert_eq!(f.terminal_limit(&[0.0], &[-1]), 0.0);
}

#[test]
fn perturbation_bumps_growth() {
    let e = builtin("exampleE");
    let q = e.perturbed(Perturbation { eps: 0.2, velocity: vec![1.0, 0.0], cost_amplitude: 1.0, terminal_amplitude: 1.0 });
    assert_abs_diff_eq!(q.growth.c_f, 2.2, epsilon = 1e-12);
    let a = control_index(&e, &[-1.0, 0.0]);
    assert_abs_diff_eq!(q.eval_f(2, &[1.0, 0.0], a).unwrap()[0], -1.8, epsilon = 1e-12);
    q.eval_l(2, &[1.0, 0.0], a).unwrap();
}

fn any_point() -> impl Strategy<Value = (f64, f64, bool)> {
    (-2.0..2.0f64, -2.0..2.0f64, any::<bool>())
}

proptest! {
    #[test]
    fn inclusions_hold(name in prop::sample::select(vec!["exampleA", "exampleE", "ball-eikonal"]), (x1, x2, on) in any_point()) {
        let p = builtin(name);
        let x = [if on { 0.0 } else { x1 }, x2];
        let feas = p.essential_controls(&x).unwrap();
        let own = feas.essential_of(feas.stratum).to_vec();
        let tan = p.tangential_controls(&x).unwrap();
        prop_assert!(tan.iter().all(|a| own.contains(a)));
        prop_assert!(own.iter().all(|&a| a < p.controls.len()));
        if !on && x1 != 0.0 {
            prop_assert_eq!(tan.len(), p.controls.len());
            prop_assert_eq!(own.len(), p.controls.len());
        }
    }

    #[test]
    fn slack_nonnegative((x1, x2, _) in any_point(), a in 0usize..33) {
        let p = builtin("exampleE");
        let x = [x1, x2];
        let s = p.strat.locate(&x);
        prop_assert!(p.eval_b(s, &x, a).unwrap() >= 0.0);
    }

    #[test]
    fn tangentialized_velocity_is_tangential(x2 in -2.0..2.0f64, a in 0usize..33) {
        let p = builtin("exampleE");
        let x = [0.0, x2];
        if let Tangentialized::Mixed { velocity, cost_rate, .. } = p.tangentialize_control(&x, a).unwrap() {
            let n: f64 = velocity.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(velocity[0].abs() <= 1e-9 * (1.0 + n));
            prop_assert!(cost_rate <= 0.0);
        }
    }

    #[test]
    fn cell_limits_contained_in_interface_set(x2 in -2.0..2.0f64, a in 0usize..33, side in prop::sample::select(vec![-1.0, 1.0])) {
        // upper semicontinuity probe: limits of cell velocities lie in F(x) on the interface
        let p = builtin("exampleE");
        let x = [0.0, x2];
        let cell = p.strat.locate(&[side * 1e-7, x2]);
        let v = p.eval_f(cell, &[side * 1e-7, x2], a).unwrap();
        let iface: Vec<Vec<f64>> = (0..p.controls.len()).map(|b| p.eval_f(1, &x, b).unwrap()).collect();
        // the interface set is the ball of radius 2; sampled velocities of the cells have norm <= 2
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        prop_assert!(n <= 2.0 + 1e-6);
        prop_assert!(!iface.is_empty());
    }
}
