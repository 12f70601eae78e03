use stratahjb::config::ProblemConfig;
use stratahjb::solver::*;
use stratahjb::stratification::{Hyperplane, Stratification};

fn setup(name: &str) -> (ProblemConfig, stratahjb::control::ControlProblem<f64>, StratifiedGrid<f64>) {
    let cfg = ProblemConfig::builtin(name).unwrap();
    let p = cfg.build::<f64>().unwrap();
    let s = cfg.solver();
    let [lo, hi] = s.bounds.unwrap();
    let grid = StratifiedGrid::for_problem(&p, lo, hi, s.grid.unwrap(), s.timesteps.unwrap()).unwrap();
    (cfg, p, grid)
}

/// Max error against the closed form over nodes outside the exclusion band.
fn max_error(cfg: &ProblemConfig, v: &ValueGrid<f64>, t_step: usize, band: f64) -> f64 {
    let cf = cfg.closed_form().unwrap();
    let t = v.grid.time(t_step);
    let mut err: f64 = 0.0;
    for n in v.grid.box_nodes() {
        let x = v.grid.node_point(n);
        if cf.excluded(v.grid.horizon, t, &x, band) {
            continue;
        }
        err = err.max((v.node_value(t_step, n) - cf.value(v.grid.horizon, t, &x)).abs());
    }
    err
}

#[test]
fn grid_contains_planes() {
    let strat = Stratification::new(1, vec![Hyperplane::new(0, 0.0f64), Hyperplane::new(0, 0.33f64)]).unwrap();
    let g = StratifiedGrid::build(&strat, -1.0, 1.0, 11, 10, 1.0).unwrap();
    assert!(g.axes[0].contains(&0.0));
    assert!(g.axes[0].contains(&0.33));
    assert!(g.axes[0].windows(2).all(|w| w[1] > w[0]));
    let g = StratifiedGrid::build(&strat, -1.0, 1.0, 80, 10, 1.0).unwrap();
    assert!(g.axes[0].contains(&0.0));
}

#[test]
fn example_e_continuous() {
    let (cfg, p, grid) = setup("exampleE");
    let v = solve_continuous(&p, &grid).unwrap();
    let err = max_error(&cfg, &v, 0, 2.0 * grid.dx());
    eprintln!("E err {err}, dx {}, dt {}", grid.dx(), grid.dt);
    assert!(err <= 2.0 * (grid.dx() + grid.dt));
}

#[test]
fn example_f_lsc() {
    let (cfg, p, grid) = setup("exampleF");
    let v = solve_lsc(&p, &grid).unwrap();
    let err = max_error(&cfg, &v, 0, grid.dx());
    eprintln!("F err {err}");
    assert!(err <= 1e-12);
}

#[test]
fn example_b_lsc() {
    let (cfg, p, grid) = setup("exampleB");
    let v = solve_lsc(&p, &grid).unwrap();
    let err = max_error(&cfg, &v, 0, grid.dx());
    eprintln!("B err {err}");
    assert!(err <= 1e-12);
}


fn max_diff(a: &ValueGrid<f64>, b: &ValueGrid<f64>, step: usize) -> f64 {
    a.grid
        .box_nodes()
        .into_iter()
        .map(|n| (a.node_value(step, n) - b.node_value(step, n)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn grid_examples() {
    let strat = Stratification::new(2, vec![Hyperplane::new(0, 0.0f64)]).unwrap();
    let g = StratifiedGrid::build(&strat, -1.0, 1.0, 81, 10, 1.0).unwrap();
    assert_eq!(g.axes[0][40], 0.0);
    assert_eq!(g.node_count(), 81 * 81);
    let on_plane = (0..g.node_count()).filter(|&n| g.node_stratum[n] == 1).count();
    assert_eq!(on_plane, 81);

    let g = StratifiedGrid::build(&strat, -1.0, 1.0, 80, 10, 1.0).unwrap();
    assert_eq!(g.axes[0].len(), 81);
    assert_eq!(g.axes[1].len(), 80);
    let gaps: Vec<f64> = g.axes[0].windows(2).map(|w| w[1] - w[0]).collect();
    let (mn, mx) = gaps.iter().fold((f64::MAX, 0.0f64), |(a, b), &h| (a.min(h), b.max(h)));
    assert!(mx / mn <= 2.0 + 1e-9);
    assert!(mx / mn > 1.0 + 1e-6);

    let strat1 = Stratification::new(1, vec![Hyperplane::new(0, 0.0f64)]).unwrap();
    let g = StratifiedGrid::build(&strat1, -2.0, 2.0, 41, 100, 1.0).unwrap();
    assert!((g.dt - 0.01).abs() < 1e-15);

    let far = Stratification::new(1, vec![Hyperplane::new(0, 5.0f64)]).unwrap();
    let g = StratifiedGrid::build(&far, -1.0, 1.0, 11, 10, 1.0).unwrap();
    assert_eq!(g.warnings.len(), 1);
}

#[test]
fn unit_cost_is_exact() {
    use stratahjb::control::*;
    let strat = Stratification::new(2, vec![Hyperplane::new(0, 0.0f64)]).unwrap();
    let pieces = vec![
        Some(Piece::new(VelocityFamily::ScaledBall { scale: 1.0 }, CostFamily::Constant(1.0))),
        Some(Piece::new(VelocityFamily::Constant(vec![0.0, 0.3]), CostFamily::Constant(1.0))),
        Some(Piece::new(VelocityFamily::ScaledBall { scale: 0.5 }, CostFamily::Constant(1.0))),
    ];
    let p = ControlProblem::new(
        "unit",
        strat,
        ControlSet::ball(2, 1.0, 8).unwrap(),
        pieces,
        TerminalCost::Constant(0.0),
        TerminalMode::Lipschitz,
        GrowthConstants { c_f: 1.0, c_l: 1.0, lambda_l: 1.0, lambda_phi: 1.0 },
        1.0,
    )
    .unwrap();
    let g = StratifiedGrid::build(&p.strat, -1.0, 1.0, 21, 20, 1.0).unwrap();
    for v in [solve_continuous(&p, &g).unwrap(), solve_lsc(&p, &g).unwrap()] {
        for n in 0..=g.steps {
            for node in 0..g.node_count() {
                assert!((v.node_value(n, node) - (1.0 - g.time(n))).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn query_reproduces_affine_data() {
    use stratahjb::control::*;
    // zero dynamics and cost: v(t, .) = phi for all t
    let strat = Stratification::new(2, vec![Hyperplane::new(0, 0.0f64)]).unwrap();
    let piece = Piece::new(VelocityFamily::Constant(vec![0.0, 0.0]), CostFamily::Constant(0.0));
    let p = ControlProblem::new(
        "still",
        strat,
        ControlSet::finite(vec![vec![0.0, 0.0]]).unwrap(),
        vec![Some(piece.clone()), Some(piece.clone()), Some(piece)],
        TerminalCost::LinearX1,
        TerminalMode::Lipschitz,
        GrowthConstants { c_f: 1.0, c_l: 1.0, lambda_l: 1.0, lambda_phi: 1.0 },
        1.0,
    )
    .unwrap();
    let g = StratifiedGrid::build(&p.strat, -1.0, 1.0, 12, 4, 1.0).unwrap();
    let v = solve_continuous(&p, &g).unwrap();
    for x in [[0.0, 0.0], [-0.37, 0.91], [0.123, -1.0]] {
        for t in [0.0, 0.33, 1.0] {
            assert!((v.query(t, &x).unwrap() - x[0]).abs() < 1e-12);
        }
    }
    let l = solve_lsc(&p, &g).unwrap();
    assert!((l.query(0.5, &[0.25, 0.5]).unwrap() - 0.25).abs() < 1e-12);
    assert!(matches!(v.query(0.0, &[1.5, 0.0]), Err(stratahjb::Error::OutOfRange(_))));
    assert!(matches!(v.query(1.5, &[0.0, 0.0]), Err(stratahjb::Error::OutOfRange(_))));
}

#[test]
fn terminal_layer_is_phi() {
    let (_, p, grid) = setup("exampleF");
    let v = solve_lsc(&p, &grid).unwrap();
    for n in 0..grid.node_count() {
        let x = grid.node_point(n);
        assert_eq!(v.node_value(grid.steps, n), p.terminal_at(&x));
    }
    // both one-sided limits are kept at the jump
    let gamma = grid.node_stratum.iter().position(|&s| s == 1).unwrap();
    let mut layers: Vec<f64> = v.layers(gamma).map(|j| v.values[grid.steps][j]).collect();
    layers.sort_by(f64::total_cmp);
    assert_eq!(layers, vec![0.0, 0.0, 1.0]);
}

#[test]
fn continuous_mode_rejects_lsc_terminal() {
    let (_, p, grid) = setup("exampleF");
    assert!(matches!(solve_continuous(&p, &grid), Err(stratahjb::Error::TerminalModeMismatch(_))));
}

#[test]
fn box_too_small() {
    // f = 1 everywhere: every foot point within T of the right edge leaves
    let cfg = ProblemConfig::builtin("f-equals-one").unwrap();
    let p = cfg.build::<f64>().unwrap();
    let grid = StratifiedGrid::build(&p.strat, -0.1, 0.1, 9, 20, 1.0).unwrap();
    assert!(matches!(solve_lsc(&p, &grid), Err(stratahjb::Error::BoxTooSmall { .. })));
    let padded = StratifiedGrid::for_problem(&p, -0.1, 0.1, 9, 20).unwrap();
    assert!(solve_lsc(&p, &padded).is_ok());
}

#[test]
fn example_a_off_interface() {
    let (cfg, p, grid) = setup("exampleA");
    let v = solve_continuous(&p, &grid).unwrap();
    let err = max_error(&cfg, &v, 0, 0.1);
    assert!(err <= 2.0 * (grid.dx() + grid.dt), "error {err}");
}

#[test]
fn lsc_matches_continuous_on_example_e() {
    let (_, p, grid) = setup("exampleE");
    let c = solve_continuous(&p, &grid).unwrap();
    let l = solve_lsc(&p, &grid).unwrap();
    let diff = max_diff(&c, &l, 0);
    assert!(diff <= 2.0 * (grid.dx() + grid.dt), "diff {diff}");
}

#[test]
fn interface_rules_agree_on_ball_eikonal() {
    let (cfg, p, grid) = setup("ball-eikonal");
    let a = solve_continuous_with(&p, &grid, InterfaceRule::Essential).unwrap();
    let b = solve_continuous_with(&p, &grid, InterfaceRule::TangentialPlusCells).unwrap();
    let diff = max_diff(&a, &b, 0);
    assert!(diff <= 3.0 * (grid.dx() + grid.dt));
    assert!(max_error(&cfg, &a, 0, 2.0 * grid.dx()) <= 2.0 * (grid.dx() + grid.dt));
}

#[test]
fn causality() {
    // a bump in phi far from a node cannot reach it within one step
    let cfg = ProblemConfig::builtin("ball-eikonal").unwrap();
    let p = cfg.build::<f64>().unwrap();
    let grid = StratifiedGrid::build(&p.strat, -2.0, 2.0, 41, 40, 1.0).unwrap();
    let base = solve_continuous(&p, &grid).unwrap();
    let mut q = p.clone();
    q.terminal = stratahjb::control::TerminalCost::Table {
        x1: grid.axes[0].clone(),
        values: grid.axes[0].iter().map(|&x| if (x - 1.0).abs() < 1e-9 { x.abs() + 1.0 } else { x.abs() }).collect(),
    };
    let bumped = solve_continuous(&q, &grid).unwrap();
    let reach = grid.dt * p.growth.c_f * (1.0 + 2.0 * 2f64.sqrt());
    let n = grid.steps - 1;
    for node in 0..grid.node_count() {
        let x = grid.node_point(node);
        if (x[0] - 1.0).abs() > reach + grid.dx() {
            assert_eq!(base.node_value(n, node), bumped.node_value(n, node));
        }
    }
}

#[test]
fn padding_keeps_the_reported_box() {
    let (_, p, grid) = setup("exampleE");
    assert!(grid.pad >= p.horizon * 2.0);
    assert!(grid.outer_lo < grid.lo && grid.outer_hi > grid.hi);
    assert_eq!(grid.box_nodes().len(), 161 * 161);
    let v = solve_continuous(&p, &grid).unwrap();
    assert_eq!(v.clamped_updates, 0);
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]

    #[test]
    fn scheme_is_monotone(delta in 0.0..1.0f64, name in proptest::sample::select(vec!["exampleE", "exampleF", "exampleB"])) {
        let cfg = ProblemConfig::builtin(name).unwrap();
        let p = cfg.build::<f64>().unwrap();
        let grid = StratifiedGrid::build(&p.strat, -2.0, 2.0, 41, 10, p.horizon).unwrap();
        let mode = if p.terminal_mode == stratahjb::control::TerminalMode::Lsc { SolveMode::Lsc } else { SolveMode::Continuous };
        let base = solve(&p, &grid, mode).unwrap();
        let mut q = p.clone();
        q.terminal = stratahjb::control::TerminalCost::Shifted(Box::new(p.terminal.clone()), delta);
        let up = solve(&q, &grid, mode).unwrap();
        for step in 0..=grid.steps {
            for node in 0..grid.node_count() {
                let d = up.node_value(step, node) - base.node_value(step, node);
                proptest::prop_assert!(d >= -1e-12 && d <= delta + 1e-12);
            }
        }
    }

    #[test]
    fn terminal_perturbation_is_non_expansive(eps in 0.0..0.5f64, name in proptest::sample::select(vec!["exampleE", "ball-eikonal"])) {
        let cfg = ProblemConfig::builtin(name).unwrap();
        let p = cfg.build::<f64>().unwrap();
        let grid = StratifiedGrid::for_problem(&p, -1.0, 1.0, 21, 10).unwrap();
        let base = solve_continuous(&p, &grid).unwrap();
        let q = p.perturbed(stratahjb::control::Perturbation {
            eps,
            velocity: vec![0.0, 0.0],
            cost_amplitude: 0.0,
            terminal_amplitude: 1.0,
        });
        let moved = solve_continuous(&q, &grid).unwrap();
        for step in 0..=grid.steps {
            for node in 0..grid.node_count() {
                let d = (moved.node_value(step, node) - base.node_value(step, node)).abs();
                proptest::prop_assert!(d <= eps + 1e-12);
            }
        }
    }
}

#[test]
fn front_nodes_take_the_lower_value() {
    // the exact value is 0 on the front x = T - t
    let (_, p, grid) = setup("exampleF");
    let v = solve_lsc(&p, &grid).unwrap();
    for n in [0, 10, 50, 99] {
        let t = grid.time(n);
        assert_eq!(v.query(t, &[p.horizon - t]).unwrap(), 0.0, "t = {t}");
        assert_eq!(v.query(t, &[p.horizon - t + grid.dx()]).unwrap(), 1.0);
    }
}
