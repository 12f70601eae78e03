//! Controlled trajectories of the switching system, Filippov tracking onto
//! interfaces, reachable-set sampling, the exhaustive value oracle and
//! trajectory-level dynamic programming checks.

use crate::control::ControlProblem;
use crate::error::{Error, Result};
use crate::hull::distance_to_hull;
use crate::scalar::{dist, norm, Scalar};
use crate::stratification::{AxisConstraint, StratumKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub const DEFAULT_MAX_CROSSINGS: usize = 10_000;

/// Anything that can be queried as a value function `v(t, x)`.
pub trait ValueFunction<T> {
    fn value(&self, t: T, x: &[T]) -> Result<T>;
}

impl<T, F> ValueFunction<T> for F
where
    F: Fn(T, &[T]) -> T,
{
    fn value(&self, t: T, x: &[T]) -> Result<T> {
        Ok(self(t, x))
    }
}

/// Piecewise-constant control: `controls[i]` acts on
/// `[breakpoints[i], breakpoints[i + 1])`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseControl<T> {
    pub breakpoints: Vec<T>,
    pub controls: Vec<usize>,
}

impl<T: Scalar> PiecewiseControl<T> {
    pub fn new(breakpoints: Vec<T>, controls: Vec<usize>) -> Result<Self> {
        if controls.is_empty() || breakpoints.len() != controls.len() + 1 {
            return Err(Error::InvalidArgument(
                "piecewise control needs one more breakpoint than controls".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("breakpoints must increase".into()));
        }
        Ok(Self { breakpoints, controls })
    }

    pub fn constant(t0: T, t1: T, control: usize) -> Result<Self> {
        Self::new(vec![t0, t1], vec![control])
    }

    pub fn start(&self) -> T {
        self.breakpoints[0]
    }

    pub fn end(&self) -> T {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    /// Index of the interval acting right after (`forward`) or right before
    /// time `s`.
    fn interval(&self, s: T, forward: bool) -> usize {
        let n = self.controls.len();
        for i in 0..n {
            let hi = self.breakpoints[i + 1];
            if (forward && s < hi) || (!forward && s <= hi) {
                return i;
            }
        }
        n - 1
    }

    pub fn control_at(&self, s: T) -> usize {
        self.controls[self.interval(s, true)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossingEvent<T> {
    pub time: T,
    pub from: usize,
    pub to: usize,
}

/// Sampled state path with its control log and augmented coordinate
/// `eta` (`eta' = -l`).
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub controls: Vec<usize>,
    /// Stratum whose piece drives the motion at each sample.
    pub strata: Vec<usize>,
    pub eta: Vec<T>,
    pub events: Vec<CrossingEvent<T>>,
}

impl<T: Scalar> Trajectory<T> {
    fn empty() -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            controls: Vec::new(),
            strata: Vec::new(),
            eta: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &[T] {
        &self.states[self.states.len() - 1]
    }

    /// `int l ds` over the whole path.
    pub fn running_cost(&self) -> T {
        self.eta[0] - self.eta[self.eta.len() - 1]
    }

    fn push(&mut self, t: T, x: &[T], a: usize, s: usize, eta: T) {
        self.times.push(t);
        self.states.push(x.to_vec());
        self.controls.push(a);
        self.strata.push(s);
        self.eta.push(eta);
    }

    fn reverse(&mut self) {
        self.times.reverse();
        self.states.reverse();
        self.controls.reverse();
        self.strata.reverse();
        self.eta.reverse();
        self.events.reverse();
        for e in &mut self.events {
            std::mem::swap(&mut e.from, &mut e.to);
        }
        // renormalize so that eta vanishes at the end point and decreases in time
        let end = self.eta[self.eta.len() - 1];
        for e in &mut self.eta {
            *e = end - *e;
        }
        let shift = self.eta[self.eta.len() - 1];
        for e in &mut self.eta {
            *e -= shift;
        }
    }
}

/// Settings of the stratified integrator.
#[derive(Clone, Copy, Debug)]
pub struct Integrator<T> {
    pub dt: T,
    pub max_crossings: usize,
}

impl<T: Scalar> Integrator<T> {
    pub fn new(dt: T) -> Self {
        Self {
            dt,
            max_crossings: DEFAULT_MAX_CROSSINGS,
        }
    }

    /// Forward integration from `(t0, x0)` to the end of `ctrl`.
    pub fn integrate(
        &self,
        p: &ControlProblem<T>,
        t0: T,
        x0: &[T],
        ctrl: &PiecewiseControl<T>,
    ) -> Result<Trajectory<T>> {
        if t0 < ctrl.start() || t0 >= ctrl.end() {
            return Err(Error::InvalidArgument("t0 outside the control horizon".into()));
        }
        let mut traj = Trajectory::empty();
        self.run(p, t0, ctrl.end(), x0, ctrl, Some(&mut traj))?;
        Ok(traj)
    }

    /// Backward integration of `y' = f(y, a)` with `y(t0) = x0` down to the
    /// start of `ctrl`. Samples are returned in increasing time with
    /// `eta(t0) = 0`.
    pub fn integrate_backward(
        &self,
        p: &ControlProblem<T>,
        t0: T,
        x0: &[T],
        ctrl: &PiecewiseControl<T>,
    ) -> Result<Trajectory<T>> {
        if t0 <= ctrl.start() || t0 > ctrl.end() {
            return Err(Error::InvalidArgument("t0 outside the control horizon".into()));
        }
        let mut traj = Trajectory::empty();
        self.run(p, t0, ctrl.start(), x0, ctrl, Some(&mut traj))?;
        traj.reverse();
        Ok(traj)
    }

    /// End state and running cost without recording the path.
    pub fn advance(
        &self,
        p: &ControlProblem<T>,
        t0: T,
        t1: T,
        x0: &[T],
        ctrl: &PiecewiseControl<T>,
    ) -> Result<(Vec<T>, T)> {
        self.run(p, t0, t1, x0, ctrl, None)
    }

    fn run(
        &self,
        p: &ControlProblem<T>,
        t_start: T,
        t_end: T,
        x0: &[T],
        ctrl: &PiecewiseControl<T>,
        mut rec: Option<&mut Trajectory<T>>,
    ) -> Result<(Vec<T>, T)> {
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        let forward = t_end >= t_start;
        let sign = if forward { T::one() } else { -T::one() };
        let d = p.dim();
        let mut x = x0.to_vec();
        let mut s = t_start;
        let mut cost = T::zero();
        let mut crossings = 0usize;
        let a0 = ctrl.controls[ctrl.interval(s, forward)];
        let mut active = select_piece(p, &x, a0, sign)?;
        if let Some(r) = rec.as_deref_mut() {
            r.push(s, &x, a0, active, T::zero());
        }
        let mut y = vec![T::zero(); d];
        let span_eps = T::lit(1e-12) * (T::one() + t_start.abs().max(t_end.abs()));
        while (t_end - s) * sign > span_eps {
            let k = ctrl.interval(s, forward);
            let a = ctrl.controls[k];
            let bound = if forward { ctrl.breakpoints[k + 1] } else { ctrl.breakpoints[k] };
            let target = if forward { bound.min(t_end) } else { bound.max(t_end) };
            if (target - s).abs() <= span_eps {
                s = target;
                continue;
            }
            let h = self.dt.min((target - s).abs());
            let now = select_piece(p, &x, a, sign)?;
            if now != active {
                if let Some(r) = rec.as_deref_mut() {
                    r.events.push(CrossingEvent { time: s, from: active, to: now });
                }
                active = now;
            }
            let c = rk4_step(p, active, &x, a, sign, h, &mut y);
            if p.strat.in_closure(active, &y) {
                let landed = p.strat.locate(&y);
                if p.strat.strata()[landed].kind != StratumKind::Cell {
                    y = p.strat.project_to_stratum(landed, &y)?;
                }
                x.copy_from_slice(&y);
                s += sign * h;
                cost += c;
            } else {
                let (tau, c_tau) = bisect_exit(p, active, &x, a, sign, h, &mut y);
                snap_onto_boundary(p, active, &mut y);
                x.copy_from_slice(&y);
                s += sign * tau;
                cost += c_tau;
                crossings += 1;
                if crossings > self.max_crossings {
                    return Err(Error::ZenoCapExceeded(self.max_crossings));
                }
                let next = select_piece(p, &x, a, sign)?;
                if next != active {
                    if let Some(r) = rec.as_deref_mut() {
                        r.events.push(CrossingEvent { time: s, from: active, to: next });
                    }
                    active = next;
                }
            }
            if let Some(r) = rec.as_deref_mut() {
                r.push(s, &x, a, active, -cost);
            }
        }
        Ok((x, cost))
    }
}

/// Which stratum's piece drives the motion from `x` under control `a`
/// (`sign = -1` for backward time).
pub fn select_piece<T: Scalar>(p: &ControlProblem<T>, x: &[T], a: usize, sign: T) -> Result<usize> {
    let l = p.strat.locate(x);
    let st = &p.strat.strata()[l];
    if st.kind == StratumKind::Cell {
        return Ok(l);
    }
    let d = p.dim();
    let mut v = vec![T::zero(); d];
    let tangent = p.strat.tangent_space_of(l);
    p.velocity_into(p.piece(l)?, x, a, &mut v);
    v.iter_mut().for_each(|c| *c *= sign);
    if tangent.contains(&v, p.tangency_tol(&v)) {
        return Ok(l);
    }
    let own = v.clone();
    for k in p.strat.incident_strata(l) {
        if k == l {
            continue;
        }
        p.velocity_into(p.piece(k)?, x, a, &mut v);
        v.iter_mut().for_each(|c| *c *= sign);
        let tol = p.tangency_tol(&v);
        if p.strat.closure_cone_at_face(k, l).contains(&v, tol) && !tangent.contains(&v, tol) {
            return Ok(k);
        }
    }
    // No piece admits the motion: follow the own velocity into the stratum it
    // points to; the integrator will then chatter and hit the crossing cap.
    let mut sig = st.signature.clone();
    let tol = p.tangency_tol(&own);
    for (ax, &c) in own.iter().enumerate() {
        if let Some(k) = p.strat.zero_plane_on_axis(l, ax) {
            if c.abs() > tol {
                sig[k] = if c > T::zero() { 1 } else { -1 };
            }
        }
    }
    Ok(p.strat.stratum_by_signature(&sig).unwrap_or(l))
}

/// Velocity of piece `stratum`, projected onto its tangent space when the
/// stratum is lower dimensional (sliding).
fn drift<T: Scalar>(p: &ControlProblem<T>, stratum: usize, x: &[T], a: usize, sign: T, out: &mut [T]) -> T {
    let piece = p.pieces[stratum].as_ref().expect("pieces validated");
    p.velocity_into(piece, x, a, out);
    for (ax, o) in out.iter_mut().enumerate() {
        *o *= sign;
        if p.strat.zero_plane_on_axis(stratum, ax).is_some() {
            *o = T::zero();
        }
    }
    p.cost_of(piece, x)
}

/// Classical RK4 step of length `h` on `(y, int l)`; returns the cost increment.
fn rk4_step<T: Scalar>(p: &ControlProblem<T>, stratum: usize, x: &[T], a: usize, sign: T, h: T, out: &mut [T]) -> T {
    let d = x.len();
    let mut k = [[T::zero(); 3]; 4];
    let mut lk = [T::zero(); 4];
    let mut tmp = [T::zero(); 3];
    let mut stage_v = [T::zero(); 3];
    let half = T::lit(0.5);
    lk[0] = drift(p, stratum, x, a, sign, &mut k[0][..d]);
    for stage in 1..4 {
        let c = if stage == 3 { h } else { h * half };
        for i in 0..d {
            tmp[i] = x[i] + c * k[stage - 1][i];
        }
        lk[stage] = drift(p, stratum, &tmp[..d], a, sign, &mut stage_v[..d]);
        k[stage] = stage_v;
    }
    let sixth = h / T::lit(6.0);
    for i in 0..d {
        out[i] = x[i] + sixth * (k[0][i] + T::lit(2.0) * (k[1][i] + k[2][i]) + k[3][i]);
    }
    if p.strat.strata()[stratum].kind != StratumKind::Cell {
        for (ax, o) in out.iter_mut().enumerate() {
            if let Some(pl) = p.strat.zero_plane_on_axis(stratum, ax) {
                *o = p.strat.hyperplanes()[pl].offset;
            }
        }
    }
    sixth * (lk[0] + T::lit(2.0) * (lk[1] + lk[2]) + lk[3])
}

/// Bisects the step length at which the RK4 path leaves the closure of
/// `stratum`; `out` receives the first point found outside (or on) it.
fn bisect_exit<T: Scalar>(
    p: &ControlProblem<T>,
    stratum: usize,
    x: &[T],
    a: usize,
    sign: T,
    h: T,
    out: &mut [T],
) -> (T, T) {
    let mut lo = T::zero();
    let mut hi = h;
    let tol = T::lit(1e-10) * h;
    let mut buf = vec![T::zero(); x.len()];
    while hi - lo > tol {
        let mid = (lo + hi) * T::lit(0.5);
        rk4_step(p, stratum, x, a, sign, mid, &mut buf);
        if p.strat.in_closure(stratum, &buf) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = rk4_step(p, stratum, x, a, sign, hi, out);
    (hi, c)
}

/// Moves coordinates that are within the crossing band of a bounding plane
/// of `stratum` exactly onto that plane.
fn snap_onto_boundary<T: Scalar>(p: &ControlProblem<T>, stratum: usize, y: &mut [T]) {
    let sig = &p.strat.strata()[stratum].signature;
    for (k, h) in p.strat.hyperplanes().iter().enumerate() {
        if sig[k] == 0 {
            continue;
        }
        let side = if sig[k] > 0 { T::one() } else { -T::one() };
        let band = T::lit(1e-8) * (T::one() + h.offset.abs()) + p.strat.snap_tolerance_of(k);
        if side * (y[h.axis] - h.offset) < band {
            y[h.axis] = h.offset;
        }
    }
}

/// Outcome of tracking a reference path by an interface trajectory.
#[derive(Clone, Debug)]
pub struct FilippovReport<T> {
    pub trajectory: Trajectory<T>,
    /// `int dist((y', eta'), G_interface(y)) ds` at every sample.
    pub deviation: Vec<T>,
    pub gaps: Vec<T>,
    pub bounds: Vec<T>,
    pub lipschitz: T,
    pub violations: usize,
}

impl<T: Scalar> FilippovReport<T> {
    pub fn final_gap(&self) -> T {
        self.gaps[self.gaps.len() - 1]
    }

    pub fn final_bound(&self) -> T {
        self.bounds[self.bounds.len() - 1]
    }

    pub fn total_deviation(&self) -> T {
        self.deviation[self.deviation.len() - 1]
    }
}

/// Tangential augmented velocities `(f, -l)` at `x` on `stratum`, with the
/// slack range `b`.
fn tangential_set<T: Scalar>(p: &ControlProblem<T>, stratum: usize, x: &[T]) -> Result<Vec<(usize, Vec<T>, T, T)>> {
    let piece = p.piece(stratum)?;
    let tangent = p.strat.tangent_space_of(stratum);
    let mut out = Vec::new();
    let mut v = vec![T::zero(); p.dim()];
    let l = p.cost_of(piece, x);
    let b = (p.growth.cost_bound(x) - l).max(T::zero());
    for a in 0..p.controls.len() {
        p.velocity_into(piece, x, a, &mut v);
        if tangent.contains(&v, p.tangency_tol(&v)) {
            out.push((a, tangent.project(&v), -l, b));
        }
    }
    Ok(out)
}

/// Distance from `(dv, dw)` to `(v, w - r)` with `r` in `[0, b]`.
fn augmented_distance<T: Scalar>(v: &[T], w: T, b: T, dv: &[T], dw: T) -> T {
    let dw_clamped = dw.min(w).max(w - b);
    let mut s = (dw - dw_clamped) * (dw - dw_clamped);
    for (a, c) in v.iter().zip(dv) {
        s += (*a - *c) * (*a - *c);
    }
    s.sqrt()
}

/// Sampled Hausdorff Lipschitz quotient of the tangential augmented set
/// along the interface, inside `[lo, hi]^d`.
pub fn estimate_interface_lipschitz<T: Scalar>(
    p: &ControlProblem<T>,
    stratum: usize,
    lo: T,
    hi: T,
    samples: usize,
    seed: u64,
) -> Result<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = T::zero();
    for _ in 0..samples {
        let (Some(x), Some(z)) = (
            p.strat.sample_point(stratum, lo, hi, &mut rng),
            p.strat.sample_point(stratum, lo, hi, &mut rng),
        ) else {
            continue;
        };
        let dx = dist(&x, &z);
        if dx <= T::zero() {
            continue;
        }
        let gx = tangential_set(p, stratum, &x)?;
        let gz = tangential_set(p, stratum, &z)?;
        let one_sided = |g1: &[(usize, Vec<T>, T, T)], g2: &[(usize, Vec<T>, T, T)]| {
            g1.iter()
                .map(|(_, v, w, _)| {
                    g2.iter()
                        .map(|(_, u, wu, bu)| augmented_distance(u, *wu, *bu, v, *w))
                        .fold(T::infinity(), T::min)
                })
                .fold(T::zero(), T::max)
        };
        let h = one_sided(&gx, &gz).max(one_sided(&gz, &gx));
        if h.is_finite() {
            best = best.max(h / dx);
        }
    }
    Ok(best)
}

/// Tracks `reference` by a trajectory of the interface dynamics, choosing at
/// each step the tangential control closest to the reference derivative.
/// Reports the measured gap against `e^{L (t - t0)} (gap0 + int dist)`.
pub fn filippov_project<T: Scalar>(
    p: &ControlProblem<T>,
    stratum: usize,
    reference: &Trajectory<T>,
    lipschitz: T,
) -> Result<FilippovReport<T>> {
    let st = p.strat.stratum(stratum)?;
    if st.kind == StratumKind::Cell {
        return Err(Error::NotOnInterface);
    }
    if reference.len() < 2 {
        return Err(Error::InvalidArgument("reference needs at least two samples".into()));
    }
    let d = p.dim();
    let mut z = p.strat.project_to_stratum(stratum, &reference.states[0])?;
    if tangential_set(p, stratum, &z)?.is_empty() {
        return Err(Error::EmptyTangentialSet(stratum));
    }
    let t0 = reference.times[0];
    let gap0 = dist(&z, &reference.states[0]);
    let mut traj = Trajectory::empty();
    let mut eta = reference.eta[0];
    let mut deviation = vec![T::zero()];
    let mut gaps = vec![gap0];
    let mut bounds = vec![gap0];
    let mut violations = 0usize;
    let mut acc = T::zero();
    let mut dv = vec![T::zero(); d];
    let mut first_control = None;
    for i in 0..reference.len() - 1 {
        let ds = reference.times[i + 1] - reference.times[i];
        if !(ds > T::zero()) {
            continue;
        }
        for k in 0..d {
            dv[k] = (reference.states[i + 1][k] - reference.states[i][k]) / ds;
        }
        let dw = (reference.eta[i + 1] - reference.eta[i]) / ds;
        let q = p.strat.project_to_stratum(stratum, &reference.states[i])?;
        let gq = tangential_set(p, stratum, &q)?;
        let dist_i = gq
            .iter()
            .map(|(_, v, w, b)| augmented_distance(v, *w, *b, &dv, dw))
            .fold(T::infinity(), T::min);
        let gz = tangential_set(p, stratum, &z)?;
        if gz.is_empty() {
            return Err(Error::EmptyTangentialSet(stratum));
        }
        let mut best = 0usize;
        let mut best_d = T::infinity();
        for (j, (_, v, w, b)) in gz.iter().enumerate() {
            let dd = augmented_distance(v, *w, *b, &dv, dw);
            if dd < best_d {
                best_d = dd;
                best = j;
            }
        }
        let (a, v, w, b) = &gz[best];
        let dw_used = dw.min(*w).max(*w - *b);
        let a = *a;
        first_control.get_or_insert(a);
        traj.push(reference.times[i], &z, a, stratum, eta);
        for k in 0..d {
            z[k] += ds * v[k];
        }
        z = p.strat.project_to_stratum(stratum, &z)?;
        eta += ds * dw_used;
        acc += ds * dist_i;
        let t = reference.times[i + 1];
        let gap = dist(&z, &reference.states[i + 1]);
        let bound = (lipschitz * (t - t0)).exp() * (gap0 + acc);
        if gap > bound * (T::one() + T::lit(1e-9)) + T::lit(1e-12) {
            violations += 1;
        }
        deviation.push(acc);
        gaps.push(gap);
        bounds.push(bound);
    }
    let last = reference.len() - 1;
    let a_last = traj.controls.last().copied().or(first_control).unwrap_or(0);
    traj.push(reference.times[last], &z, a_last, stratum, eta);
    Ok(FilippovReport {
        trajectory: traj,
        deviation,
        gaps,
        bounds,
        lipschitz,
        violations,
    })
}

fn random_schedule<T: Scalar, R: Rng>(t: T, controls: &[usize], rng: &mut R) -> Result<PiecewiseControl<T>> {
    let pieces = rng.gen_range(1..=3usize);
    let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| rng.gen_range(0.05..0.95)).collect();
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let mut bp = vec![T::zero()];
    bp.extend(cuts.iter().map(|&c| t * T::lit(c)));
    bp.push(t);
    let ctl = (0..bp.len() - 1)
        .map(|_| controls[rng.gen_range(0..controls.len())])
        .collect();
    PiecewiseControl::new(bp, ctl)
}

/// End points after time `t` under random piecewise-constant controls with
/// at most three pieces.
pub fn reachable_samples<T: Scalar>(p: &ControlProblem<T>, x: &[T], t: T, n: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..p.controls.len()).collect();
    let integ = Integrator::new(t / T::lit(20.0));
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let ctrl = random_schedule(t, &all, &mut rng)?;
        match integ.advance(p, T::zero(), t, x, &ctrl) {
            Ok((y, _)) => out.push(y),
            Err(Error::ZenoCapExceeded(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Like [`reachable_samples`], restricted to controls tangential to the
/// interface at `x`.
pub fn reachable_tangential_samples<T: Scalar>(
    p: &ControlProblem<T>,
    stratum: usize,
    x: &[T],
    t: T,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    if p.strat.locate(x) != stratum || p.strat.stratum(stratum)?.kind == StratumKind::Cell {
        return Err(Error::NotOnInterface);
    }
    let tangential = p.tangential_controls(x)?;
    if tangential.is_empty() {
        return Err(Error::EmptyTangentialSet(stratum));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let integ = Integrator::new(t / T::lit(20.0));
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let ctrl = random_schedule(t, &tangential, &mut rng)?;
        let (y, _) = integ.advance(p, T::zero(), t, x, &ctrl)?;
        out.push(y);
    }
    Ok(out)
}

/// Time dilation needed to reach interface landing points with interface
/// dynamics only.
#[derive(Clone, Debug)]
pub struct ContainmentFit<T> {
    pub landed: usize,
    pub total: usize,
    /// Smallest factor `D` such that every landing point is within `tol` of
    /// the tangential reachable set up to time `D t` (`inf` if none works
    /// up to `max_factor`).
    pub delay_factor: T,
}

pub fn fit_tangential_delay<T: Scalar>(
    p: &ControlProblem<T>,
    stratum: usize,
    x: &[T],
    t: T,
    n: usize,
    seed: u64,
    tol: T,
    max_factor: T,
) -> Result<ContainmentFit<T>> {
    let ends = reachable_samples(p, x, t, n, seed)?;
    let total = ends.len();
    let landed: Vec<Vec<T>> = ends
        .into_iter()
        .filter(|e| p.strat.distance_to_stratum(stratum, e).map(|d| d <= tol).unwrap_or(false))
        .collect();
    if landed.is_empty() {
        return Ok(ContainmentFit {
            landed: 0,
            total,
            delay_factor: T::zero(),
        });
    }
    let free: Vec<usize> = p
        .strat
        .tangent_space_of(stratum)
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != AxisConstraint::Zero)
        .map(|(i, _)| i)
        .collect();
    let tangential = tangential_set(p, stratum, x)?;
    if tangential.is_empty() {
        return Err(Error::EmptyTangentialSet(stratum));
    }
    // reachable set of the (frozen) interface dynamics: x + [0, s] hull(V)
    let vels: Vec<Vec<T>> = tangential
        .iter()
        .map(|(_, v, _, _)| free.iter().map(|&i| v[i]).collect())
        .chain(std::iter::once(vec![T::zero(); free.len()]))
        .collect();
    let reach = |e: &[T], s: T| -> Result<bool> {
        let q: Vec<T> = free.iter().map(|&i| e[i] - x[i]).collect();
        if free.is_empty() {
            return Ok(norm(&q) <= tol);
        }
        let scaled: Vec<Vec<T>> = vels.iter().map(|v| v.iter().map(|&c| c * s).collect()).collect();
        Ok(distance_to_hull(&scaled, &q, free.len())? <= tol)
    };
    let mut factor = T::zero();
    for e in &landed {
        if reach(e, factor * t)? {
            continue;
        }
        if !reach(e, max_factor * t)? {
            return Ok(ContainmentFit {
                landed: landed.len(),
                total,
                delay_factor: T::infinity(),
            });
        }
        let (mut lo, mut hi) = (factor, max_factor);
        for _ in 0..60 {
            let mid = (lo + hi) * T::lit(0.5);
            if reach(e, mid * t)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        factor = hi;
    }
    Ok(ContainmentFit {
        landed: landed.len(),
        total,
        delay_factor: factor,
    })
}

/// Best piecewise-constant strategy found by the oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult<T> {
    pub value: T,
    /// Control index per time slice.
    pub schedule: Vec<usize>,
    pub slice_times: Vec<T>,
    pub evaluations: usize,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exhaustive minimum of `phi(y(T)) + int l` over controls that are constant
/// on `n_slices` equal slices of `[t0, T]` and switch at most `depth` times.
pub fn oracle_value<T: Scalar>(
    p: &ControlProblem<T>,
    t0: T,
    x0: &[T],
    depth: usize,
    n_slices: usize,
) -> Result<OracleResult<T>> {
    if depth > 4 || n_slices == 0 || n_slices > 8 || p.controls.len() > 64 {
        return Err(Error::InvalidArgument(
            "oracle limits: depth <= 4, 1 <= slices <= 8, at most 64 controls".into(),
        ));
    }
    if !(t0 < p.horizon) {
        return Err(Error::InvalidArgument("t0 must be below the horizon".into()));
    }
    let na = p.controls.len();
    let eff = depth.min(n_slices - 1);
    let estimate: f64 = na as f64
        * (0..=eff)
            .map(|k| binomial(n_slices - 1, k) * ((na - 1) as f64).powi(k as i32))
            .sum::<f64>();
    if estimate > 1e7 {
        return Err(Error::BudgetExceeded {
            needed: estimate,
            budget: 1e7,
        });
    }
    let slice = (p.horizon - t0) / T::count(n_slices);
    let slice_times: Vec<T> = (0..=n_slices)
        .map(|i| if i == n_slices { p.horizon } else { t0 + slice * T::count(i) })
        .collect();
    let integ = Integrator::new(slice / T::lit(4.0));
    let ctx = OracleCtx {
        p,
        integ,
        slice_times: &slice_times,
        depth: eff,
    };
    let results: Vec<(T, Vec<usize>, usize)> = (0..na)
        .into_par_iter()
        .map(|a| {
            let mut seq = vec![a];
            let mut best = (T::infinity(), Vec::new());
            let mut evals = 0usize;
            ctx.dfs(x0, T::zero(), 0, 0, &mut seq, &mut best, &mut evals);
            (best.0, best.1, evals)
        })
        .collect();
    let mut value = T::infinity();
    let mut schedule = Vec::new();
    let mut evaluations = 0;
    for (v, s, e) in results {
        evaluations += e;
        if v < value {
            value = v;
            schedule = s;
        }
    }
    Ok(OracleResult {
        value,
        schedule,
        slice_times,
        evaluations,
    })
}

struct OracleCtx<'a, T> {
    p: &'a ControlProblem<T>,
    integ: Integrator<T>,
    slice_times: &'a [T],
    depth: usize,
}

impl<T: Scalar> OracleCtx<'_, T> {
    /// `seq` holds the controls of slices `0..=i`; slice `i` is integrated here.
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        x: &[T],
        cost: T,
        i: usize,
        switches: usize,
        seq: &mut Vec<usize>,
        best: &mut (T, Vec<usize>),
        evals: &mut usize,
    ) {
        let a = seq[i];
        let ctrl = PiecewiseControl {
            breakpoints: vec![self.slice_times[i], self.slice_times[i + 1]],
            controls: vec![a],
        };
        let Ok((y, c)) = self.integ.advance(self.p, self.slice_times[i], self.slice_times[i + 1], x, &ctrl) else {
            return;
        };
        let cost = cost + c;
        if i + 2 == self.slice_times.len() {
            *evals += 1;
            let v = cost + self.p.terminal_at(&y);
            if v < best.0 {
                *best = (v, seq.clone());
            }
            return;
        }
        for b in 0..self.p.controls.len() {
            let sw = switches + usize::from(b != a);
            if sw > self.depth {
                continue;
            }
            seq.push(b);
            self.dfs(&y, cost, i + 1, sw, seq, best, evals);
            seq.pop();
        }
    }
}

/// Outcome of one dynamic programming inequality check at a probe point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DppCheck<T> {
    pub pass: bool,
    /// Slack of the inequality (negative beyond the tolerance means failure).
    pub margin: T,
    pub paths: usize,
}

fn forward_candidates<T: Scalar, V: ValueFunction<T> + ?Sized>(
    p: &ControlProblem<T>,
    v: &V,
    t: T,
    x: &[T],
    h: T,
) -> Result<Vec<T>> {
    let integ = Integrator::new(h / T::lit(4.0));
    let mut out = Vec::with_capacity(p.controls.len());
    for a in 0..p.controls.len() {
        let ctrl = PiecewiseControl::constant(t, t + h, a)?;
        match integ.advance(p, t, t + h, x, &ctrl) {
            Ok((y, c)) => out.push(v.value(t + h, &y)? + c),
            Err(Error::ZenoCapExceeded(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Some sampled constant control satisfies `v(t,x) >= v(t+h, y(t+h)) + int l - tol`.
pub fn check_superoptimality<T: Scalar, V: ValueFunction<T> + ?Sized>(
    p: &ControlProblem<T>,
    v: &V,
    t: T,
    x: &[T],
    h: T,
    tol: T,
) -> Result<DppCheck<T>> {
    let here = v.value(t, x)?;
    let cands = forward_candidates(p, v, t, x, h)?;
    let best = cands.iter().copied().fold(T::infinity(), T::min);
    let margin = here - best;
    Ok(DppCheck {
        pass: margin >= -tol,
        margin,
        paths: cands.len(),
    })
}

/// Every sampled constant control satisfies `v(t,x) <= v(t+h, y(t+h)) + int l + tol`.
pub fn check_suboptimality<T: Scalar, V: ValueFunction<T> + ?Sized>(
    p: &ControlProblem<T>,
    v: &V,
    t: T,
    x: &[T],
    h: T,
    tol: T,
) -> Result<DppCheck<T>> {
    let here = v.value(t, x)?;
    let cands = forward_candidates(p, v, t, x, h)?;
    let best = cands.iter().copied().fold(T::infinity(), T::min);
    let margin = best - here;
    Ok(DppCheck {
        pass: margin >= -tol,
        margin,
        paths: cands.len(),
    })
}

/// Every sampled backward path into `(t, x)` satisfies
/// `v(t,x) >= v(t-h, y(t-h)) - int_{t-h}^t l - tol`.
pub fn check_backward_suboptimality<T: Scalar, V: ValueFunction<T> + ?Sized>(
    p: &ControlProblem<T>,
    v: &V,
    t: T,
    x: &[T],
    h: T,
    tol: T,
) -> Result<DppCheck<T>> {
    let here = v.value(t, x)?;
    let integ = Integrator::new(h / T::lit(4.0));
    let mut margin = T::infinity();
    let mut paths = 0;
    for a in 0..p.controls.len() {
        let ctrl = PiecewiseControl::constant(t - h, t, a)?;
        match integ.advance(p, t, t - h, x, &ctrl) {
            Ok((y, c)) => {
                paths += 1;
                margin = margin.min(here - (v.value(t - h, &y)? - c));
            }
            Err(Error::ZenoCapExceeded(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(DppCheck {
        pass: margin >= -tol,
        margin,
        paths,
    })
}
