//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs as a plain binary (`harness = false`) so the verdict lines are
//! always printed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use stratahjb::closed_form::ClosedForm;
use stratahjb::config::ProblemConfig;
use stratahjb::control::TerminalMode;
use stratahjb::solver::{solve_continuous, solve_lsc, StratifiedGrid, ValueGrid};
use stratahjb::trajectory::*;
use stratahjb::verification::*;
use stratahjb::ControlProblem;

const BUILTINS: [&str; 5] = ["exampleE", "exampleA", "exampleB", "exampleF", "ball-eikonal"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn load(name: &str) -> (ProblemConfig, ControlProblem, StratifiedGrid<f64>) {
    let cfg = ProblemConfig::builtin(name).unwrap();
    let p: ControlProblem = cfg.build().unwrap();
    let grid = default_grid(&cfg, &p);
    (cfg, p, grid)
}

fn default_grid(cfg: &ProblemConfig, p: &ControlProblem) -> StratifiedGrid<f64> {
    let s = cfg.solver();
    let [lo, hi] = s.bounds.unwrap();
    StratifiedGrid::for_problem(p, lo, hi, s.grid.unwrap(), s.timesteps.unwrap()).unwrap()
}

/// Max error against the closed form over all steps and nodes off the band.
fn closed_form_error(cf: ClosedForm, v: &ValueGrid<f64>, band: f64) -> f64 {
    let g = &v.grid;
    let mut err = 0.0f64;
    for n in 0..=g.steps {
        let t = g.time(n);
        for node in g.box_nodes() {
            let x = g.node_point(node);
            if !cf.excluded(g.horizon, t, &x, band) {
                err = err.max((v.node_value(n, node) - cf.value(g.horizon, t, &x)).abs());
            }
        }
    }
    err
}

/// Oracle at random points against a closed form; returns the worst gap.
fn oracle_gap(p: &ControlProblem, cf: ClosedForm, points: usize, seed: u64, depth: usize, slices: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let t = rng.gen_range(0.0..0.9);
        let x: Vec<f64> = (0..p.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let o = oracle_value(p, t, &x, depth, slices).unwrap();
        worst = worst.max((o.value - cf.value(p.horizon, t, &x)).abs());
    }
    worst
}

fn criterion_1() -> Outcome {
    let (cfg, p, grid) = load("exampleE");
    let cf = cfg.closed_form().unwrap();
    let oracle = oracle_gap(&p, cf, 20, 11, 2, 4);
    if oracle > 0.05 {
        return outcome(false, format!("closed form not confirmed by the oracle: gap {oracle:.3e}"));
    }
    let start = Instant::now();
    let v = solve_continuous(&p, &grid).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = closed_form_error(cf, &v, 2.0 * grid.dx());
    let tol = 2.0 * (grid.dx() + grid.dt);
    outcome(
        err <= tol && secs <= 60.0,
        format!("error {err:.4e} <= {tol:.4e}, solve {secs:.1}s <= 60s, oracle gap {oracle:.2e} <= 0.05"),
    )
}

fn criterion_2() -> Outcome {
    let (cfg, p, grid) = load("exampleA");
    let v = solve_continuous(&p, &grid).unwrap();
    let err = closed_form_error(cfg.closed_form().unwrap(), &v, 0.1);
    let tol = 2.0 * (grid.dx() + grid.dt);
    let on_gamma = v.query(0.0, &[0.0, 0.0]).unwrap();
    outcome(
        err <= tol,
        format!("error off |x1| < 0.1: {err:.4e} <= {tol:.4e}; reported on-interface v(0, 0) = {on_gamma:.4}"),
    )
}

fn criterion_3() -> Outcome {
    let (cfg, p, grid) = load("exampleF");
    let v = solve_lsc(&p, &grid).unwrap();
    let err = closed_form_error(cfg.closed_form().unwrap(), &v, grid.dx());
    let tol = 3.0 * (grid.dx() + grid.dt);
    // 8 probes on the moving discontinuity x = T - t, the rest at random nodes
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut probes = Vec::new();
    for k in 1..=8 {
        let n = k * grid.steps / 10;
        probes.push((grid.time(n), p.horizon - grid.time(n)));
    }
    let nodes = grid.box_nodes();
    while probes.len() < 20 {
        let n = rng.gen_range(5..grid.steps);
        let x = grid.node_point(nodes[rng.gen_range(60..nodes.len() - 60)])[0];
        probes.push((grid.time(n), x));
    }
    let mut failed = 0;
    let mut worst = 0.0f64;
    for (t, x) in &probes {
        let r = limit_property(&p, &v, *t, &[*x], 4, tol).unwrap();
        worst = worst.max(r.gaps[0]);
        if !r.pass {
            eprintln!("probe t={t} x={x} value={} gaps={:?}", r.value, r.gaps);
            failed += 1;
        }
    }
    outcome(
        err <= 1e-12 && failed == 0,
        format!("error off the front {err:.1e}; limit property {}/20 probes, worst gap {worst:.3e} <= {tol:.3e}", 20 - failed),
    )
}

fn criterion_4() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["exampleE", "ball-eikonal"] {
        let (cfg, p, grid) = load(name);
        let rep = uniqueness_crosscheck(&p, &grid).unwrap();
        pass &= rep.status == Status::Pass;
        parts.push(format!("{name} {:.3e} <= {:.3e}", rep.discrepancy.unwrap_or(f64::NAN), rep.tolerance));
        if name == "ball-eikonal" {
            let gap = oracle_gap(&p, cfg.closed_form().unwrap(), 10, 12, 2, 4);
            pass &= gap <= 0.05;
            parts.push(format!("closed form oracle gap {gap:.2e}"));
        }
    }
    outcome(pass, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let problems: Vec<ControlProblem> = BUILTINS.iter().map(|n| load(n).1).collect();
    let mut violations = 0;
    let samples = 10_000;
    for i in 0..samples {
        let p = &problems[i % problems.len()];
        let d = p.dim();
        let mut x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        if rng.gen_bool(0.5) {
            x[0] = 0.0;
        }
        let q: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let hf = p.h_full(&x, &q).unwrap();
        let he = p.h_essential(&x, &q).unwrap();
        let s = p.strat.locate(&x);
        let hg = if x[0] == 0.0 { p.h_tangential(s, &x, &q).unwrap() } else { f64::NEG_INFINITY };
        if he > hf + 1e-12 || hg > he + 1e-12 {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations} violations in {samples} samples"))
}

fn criterion_6() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for name in BUILTINS {
        let (_, p, grid) = load(name);
        let v = match p.terminal_mode {
            TerminalMode::Lipschitz => solve_continuous(&p, &grid).unwrap(),
            TerminalMode::Lsc => solve_lsc(&p, &grid).unwrap(),
        };
        // interface values of the stationary-interface example are ambiguous
        let gap = if name == "exampleA" { 0.1 } else { 0.0 };
        let rep = dpp_suite(&p, &v, &DppOptions { probes: 100, seed: 21, interface_gap: gap }).unwrap();
        pass &= rep.status == Status::Pass;
        parts.push(format!("{name} {}/{}", rep.probes - rep.failures.min(rep.probes), rep.probes));
    }
    outcome(pass, parts.join(", "))
}

fn criterion_7() -> Outcome {
    let (_, p, _) = load("exampleE");
    let lg = estimate_interface_lipschitz(&p, 1, -2.0, 2.0, 40, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for i in 0..50 {
        let reference = if i % 2 == 0 {
            // straight line leaving or approaching the interface slowly
            let x0 = [rng.gen_range(0.0..0.02), rng.gen_range(-1.0..1.0)];
            let v = [rng.gen_range(-0.05..0.05), rng.gen_range(-2.0..2.0)];
            let steps = 50;
            let mut tr = Trajectory {
                times: vec![],
                states: vec![],
                controls: vec![],
                strata: vec![],
                eta: vec![],
                events: vec![],
            };
            for k in 0..=steps {
                let s = 0.5 * k as f64 / steps as f64;
                let x = vec![x0[0] + s * v[0], x0[1] + s * v[1]];
                tr.strata.push(p.strat.locate(&x));
                tr.times.push(s);
                tr.states.push(x);
                tr.controls.push(0);
                tr.eta.push(0.0);
            }
            tr
        } else {
            // genuine trajectory with a nearly tangential control
            let samples = p.controls.samples();
            let a = (0..samples.len())
                .filter(|&a| samples[a][0].abs() <= 0.2 && samples[a][1].abs() > 0.9)
                .nth(rng.gen_range(0..2))
                .unwrap();
            let x0 = [rng.gen_range(-0.02..0.02), rng.gen_range(-1.0..1.0)];
            let ctrl = PiecewiseControl::constant(0.0, 0.5, a).unwrap();
            Integrator::new(0.01).integrate(&p, 0.0, &x0, &ctrl).unwrap()
        };
        let rep = filippov_project(&p, 1, &reference, lg).unwrap();
        violations += rep.violations;
        let b = rep.final_bound();
        if b > 0.0 {
            worst_ratio = worst_ratio.max(rep.final_gap() / b);
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations over 50 references, L_G = {lg:.3}, worst gap/bound {worst_ratio:.3}"),
    )
}

fn criterion_8() -> Outcome {
    let mut pass = true;
    let mut checked = 0;
    let mut worst = 0.0f64;
    for name in BUILTINS {
        let (_, p, grid) = load(name);
        let mode = natural_mode(&p);
        for delta in [0.0, 0.1, 0.3] {
            let rep = comparison_test(&p, &grid, mode, delta).unwrap();
            pass &= rep.status == Status::Pass;
            checked += rep.entries;
            worst = worst.max((-rep.min_difference).max(rep.max_difference - delta));
        }
    }
    outcome(pass, format!("{checked} layer values checked, worst excess {worst:.1e}"))
}

fn criterion_9() -> Outcome {
    let (_, p, grid) = load("exampleE");
    let rep = stability_test(&p, &grid, &PerturbationSpec::standard(2), 0.2, 4).unwrap();
    let diffs: Vec<String> = rep.full.levels.iter().map(|l| format!("{:.3e}", l.difference)).collect();
    let phi: Vec<String> = rep.terminal_only.levels.iter().map(|l| format!("{:.3e}", l.difference)).collect();
    outcome(
        rep.status == Status::Pass,
        format!(
            "differences [{}] (C = {:.3}), terminal-only [{}]",
            diffs.join(", "),
            rep.full.fitted_constant,
            phi.join(", ")
        ),
    )
}

fn criterion_10() -> Outcome {
    let e = hypothesis_audit(&load("exampleE").1, -2.0, 2.0, 40, 1).unwrap();
    let b = hypothesis_audit(&load("f-equals-one").1, -2.0, 2.0, 40, 1).unwrap();
    let a = hypothesis_audit(&load("exampleA").1, -2.0, 2.0, 40, 1).unwrap();
    let e_ok = e.checks.iter().all(|c| c.status == Status::Pass);
    let b_ok = b.check("H2").unwrap().status == Status::Fail && b.check("H3").unwrap().status == Status::Pass;
    let a_ok = a.check("P1").unwrap().status == Status::Fail;
    outcome(
        e_ok && b_ok && a_ok,
        format!("exampleE all PASS: {e_ok}; F={{1}} H2 FAIL + H3 PASS: {b_ok}; exampleA P1 FAIL: {a_ok}"),
    )
}

fn criterion_11() -> Outcome {
    let (_, p, _) = load("exampleE");
    let lip = |nodes: usize, steps: usize| {
        let g = StratifiedGrid::for_problem(&p, -2.0, 2.0, nodes, steps).unwrap();
        interface_lipschitz(&solve_continuous(&p, &g).unwrap())
    };
    let coarse = lip(81, 100);
    let fine = lip(161, 200);
    let change = (fine - coarse).abs() / coarse;
    outcome(change <= 0.10, format!("L(81) = {coarse:.4}, L(161) = {fine:.4}, change {:.2}%", 100.0 * change))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("Example E closed form", criterion_1),
        ("Example A off the interface", criterion_2),
        ("Example F bilateral solution", criterion_3),
        ("uniqueness cross-check", criterion_4),
        ("Hamiltonian ordering", criterion_5),
        ("DPP suite", criterion_6),
        ("Filippov bound", criterion_7),
        ("comparison ordering", criterion_8),
        ("stability ladder", criterion_9),
        ("hypothesis audits", criterion_10),
        ("interface Lipschitz surrogate", criterion_11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "acceptance {:>2} {verdict}: {name}: {} [{:.1}s]",
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
