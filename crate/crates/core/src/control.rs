//! Control systems on a stratification: per-stratum dynamics and costs,
//! tangential and essential control sets, augmented dynamics and
//! controllability diagnostics.

use crate::error::{Error, Result};
use crate::hull::inscribed_radius;
use crate::scalar::{dot, norm, Scalar};
use crate::stratification::{ConeDescriptor, Stratification, StratumKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Declared compact control set the samples are drawn from.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlFamily<T> {
    /// Centered ball; in 2-d `count` points on the sphere plus the center.
    Ball { radius: T, count: usize },
    Interval { lo: T, hi: T, count: usize },
    Finite,
}

/// Finite discretization of the compact control set.
#[derive(Clone, Debug)]
pub struct ControlSet<T> {
    dim: usize,
    samples: Vec<Vec<T>>,
    family: ControlFamily<T>,
}

fn clean<T: Scalar>(v: T) -> T {
    if v.abs() < T::lit(1e-14) {
        T::zero()
    } else {
        v
    }
}

impl<T: Scalar> ControlSet<T> {
    pub fn ball(dim: usize, radius: T, count: usize) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::InvalidArgument("ball radius must be positive".into()));
        }
        let samples = match dim {
            1 => {
                if count < 2 {
                    return Err(Error::InvalidArgument("1-d ball needs at least 2 samples".into()));
                }
                linspace(-radius, radius, count).into_iter().map(|a| vec![a]).collect()
            }
            2 => {
                if count < 3 {
                    return Err(Error::InvalidArgument("2-d ball needs at least 3 directions".into()));
                }
                let mut s = Vec::with_capacity(count + 1);
                for k in 0..count {
                    let th = T::lit(2.0) * T::PI() * T::count(k) / T::count(count);
                    s.push(vec![clean(th.cos()) * radius, clean(th.sin()) * radius]);
                }
                s.push(vec![T::zero(), T::zero()]);
                s
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "ball controls supported in dimension 1 or 2, got {dim}"
                )))
            }
        };
        Ok(Self {
            dim,
            samples,
            family: ControlFamily::Ball { radius, count },
        })
    }

    pub fn interval(lo: T, hi: T, count: usize) -> Result<Self> {
        if !(lo < hi) || count < 2 {
            return Err(Error::InvalidArgument("interval needs lo < hi and count >= 2".into()));
        }
        Ok(Self {
            dim: 1,
            samples: linspace(lo, hi, count).into_iter().map(|a| vec![a]).collect(),
            family: ControlFamily::Interval { lo, hi, count },
        })
    }

    pub fn finite(samples: Vec<Vec<T>>) -> Result<Self> {
        let dim = samples.first().map(|s| s.len()).unwrap_or(0);
        if samples.is_empty() || dim == 0 || samples.iter().any(|s| s.len() != dim) {
            return Err(Error::InvalidArgument(
                "finite control set must be nonempty with equal-length samples".into(),
            ));
        }
        Ok(Self {
            dim,
            samples,
            family: ControlFamily::Finite,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Vec<T>] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &[T] {
        &self.samples[i]
    }

    pub fn family(&self) -> &ControlFamily<T> {
        &self.family
    }

    /// Whether the declared (continuum) control set is convex.
    pub fn is_convex(&self) -> bool {
        match self.family {
            ControlFamily::Ball { .. } | ControlFamily::Interval { .. } => true,
            ControlFamily::Finite => self.samples.len() == 1,
        }
    }

    /// Membership in the declared compact set.
    pub fn contains(&self, a: &[T], tol: T) -> bool {
        match &self.family {
            ControlFamily::Ball { radius, .. } => norm(a) <= *radius + tol,
            ControlFamily::Interval { lo, hi, .. } => a[0] >= *lo - tol && a[0] <= *hi + tol,
            ControlFamily::Finite => self
                .samples
                .iter()
                .any(|s| s.iter().zip(a).all(|(&u, &v)| (u - v).abs() <= tol)),
        }
    }
}

fn linspace<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    (0..n)
        .map(|k| {
            if k + 1 == n {
                hi
            } else {
                clean(lo + (hi - lo) * T::count(k) / T::count(n - 1))
            }
        })
        .collect()
}

/// Velocity family of one stratum piece. All families are affine in the control.
#[derive(Clone, Debug, PartialEq)]
pub enum VelocityFamily<T> {
    Constant(Vec<T>),
    /// `f(x, a) = scale * a`; needs control dimension = state dimension.
    ScaledBall { scale: T },
    /// `f(x, a) = state * x + control * a + offset` (row-major matrices).
    Affine {
        state: Vec<Vec<T>>,
        control: Vec<Vec<T>>,
        offset: Vec<T>,
    },
}

impl<T: Scalar> VelocityFamily<T> {
    #[inline]
    pub fn eval_into(&self, x: &[T], a: &[T], out: &mut [T]) {
        match self {
            VelocityFamily::Constant(c) => out.copy_from_slice(c),
            VelocityFamily::ScaledBall { scale } => {
                for (o, &ai) in out.iter_mut().zip(a) {
                    *o = *scale * ai;
                }
            }
            VelocityFamily::Affine { state, control, offset } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = offset[i] + dot(&state[i], x) + dot(&control[i], a);
                }
            }
        }
    }

    /// Lipschitz constant in `x` (Frobenius bound).
    pub fn state_lipschitz(&self) -> T {
        match self {
            VelocityFamily::Affine { state, .. } => state
                .iter()
                .flat_map(|r| r.iter())
                .fold(T::zero(), |acc, &m| acc + m * m)
                .sqrt(),
            _ => T::zero(),
        }
    }

    fn validate(&self, dim: usize, control_dim: usize) -> Result<()> {
        let ok = match self {
            VelocityFamily::Constant(c) => c.len() == dim,
            VelocityFamily::ScaledBall { .. } => control_dim == dim,
            VelocityFamily::Affine { state, control, offset } => {
                state.len() == dim
                    && state.iter().all(|r| r.len() == dim)
                    && control.len() == dim
                    && control.iter().all(|r| r.len() == control_dim)
                    && offset.len() == dim
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "velocity family {self:?} does not fit state dim {dim} / control dim {control_dim}"
            )))
        }
    }
}

/// Running cost of one stratum piece (control independent).
#[derive(Clone, Debug, PartialEq)]
pub enum CostFamily<T> {
    Constant(T),
    /// `sum_k coeffs[k] * |x|^k`.
    Polynomial(Vec<T>),
}

impl<T: Scalar> CostFamily<T> {
    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        match self {
            CostFamily::Constant(c) => *c,
            CostFamily::Polynomial(coeffs) => {
                let r = norm(x);
                let mut acc = T::zero();
                let mut pow = T::one();
                for &c in coeffs {
                    acc += c * pow;
                    pow *= r;
                }
                acc
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Piece<T> {
    pub velocity: VelocityFamily<T>,
    pub cost: CostFamily<T>,
}

impl<T: Scalar> Piece<T> {
    pub fn new(velocity: VelocityFamily<T>, cost: CostFamily<T>) -> Self {
        Self { velocity, cost }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TerminalMode {
    Lipschitz,
    Lsc,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TerminalCost<T> {
    Constant(T),
    AbsX1,
    LinearX1,
    /// 1 for `x1 > 0`, else 0 (lower semicontinuous).
    IndicatorPositiveX1,
    /// Piecewise-linear in `x1` through the given knots, constant outside.
    Table { x1: Vec<T>, values: Vec<T> },
    /// Another terminal cost plus a constant.
    Shifted(Box<TerminalCost<T>>, T),
}

impl<T: Scalar> TerminalCost<T> {
    pub fn eval(&self, x: &[T]) -> T {
        match self {
            TerminalCost::Constant(c) => *c,
            TerminalCost::AbsX1 => x[0].abs(),
            TerminalCost::LinearX1 => x[0],
            TerminalCost::IndicatorPositiveX1 => {
                if x[0] > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            TerminalCost::Table { x1, values } => table_eval(x1, values, x[0]),
            TerminalCost::Shifted(inner, c) => inner.eval(x) + *c,
        }
    }

    /// One-sided limit at `x` approached from the side given per axis
    /// (`-1`, `0` or `+1`).
    pub fn limit(&self, x: &[T], approach: &[i8]) -> T {
        match self {
            TerminalCost::IndicatorPositiveX1 if x[0] == T::zero() => {
                if approach[0] > 0 {
                    T::one()
                } else {
                    T::zero()
                }
            }
            TerminalCost::Shifted(inner, c) => inner.limit(x, approach) + *c,
            _ => self.eval(x),
        }
    }

    /// Lipschitz constant, infinite for discontinuous data.
    pub fn lipschitz(&self) -> T {
        match self {
            TerminalCost::Constant(_) => T::zero(),
            TerminalCost::AbsX1 | TerminalCost::LinearX1 => T::one(),
            TerminalCost::IndicatorPositiveX1 => T::infinity(),
            TerminalCost::Table { x1, values } => x1
                .windows(2)
                .zip(values.windows(2))
                .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
                .fold(T::zero(), T::max),
            TerminalCost::Shifted(inner, _) => inner.lipschitz(),
        }
    }
}

fn table_eval<T: Scalar>(knots: &[T], values: &[T], x: T) -> T {
    if knots.is_empty() {
        return T::zero();
    }
    if x <= knots[0] {
        return values[0];
    }
    for i in 1..knots.len() {
        if x <= knots[i] {
            let th = (x - knots[i - 1]) / (knots[i] - knots[i - 1]);
            return values[i - 1] + th * (values[i] - values[i - 1]);
        }
    }
    values[values.len() - 1]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthConstants<T> {
    pub c_f: T,
    pub c_l: T,
    pub lambda_l: T,
    pub lambda_phi: T,
}

impl<T: Scalar> GrowthConstants<T> {
    pub fn lambda(&self) -> T {
        self.lambda_l.max(self.lambda_phi)
    }

    pub fn speed_bound(&self, x: &[T]) -> T {
        self.c_f * (T::one() + norm(x))
    }

    pub fn cost_bound(&self, x: &[T]) -> T {
        self.c_l * (T::one() + norm(x).powf(self.lambda_l))
    }
}

/// Smooth bounded perturbation `f + eps g`, `l + eps h`, `phi + eps k`, with
/// `g` a constant vector, `h(x) = cost_amplitude (1 + sin x1) / 2` and
/// `k(x) = terminal_amplitude sin(x1 + ... + xd)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation<T> {
    pub eps: T,
    pub velocity: Vec<T>,
    pub cost_amplitude: T,
    pub terminal_amplitude: T,
}

impl<T: Scalar> Perturbation<T> {
    fn cost(&self, x: &[T]) -> T {
        self.eps * self.cost_amplitude * (T::one() + x[0].sin()) * T::lit(0.5)
    }

    fn terminal(&self, x: &[T]) -> T {
        let s = x.iter().fold(T::zero(), |acc, &v| acc + v);
        self.eps * self.terminal_amplitude * s.sin()
    }
}

/// One element of the augmented essential dynamics `(f, -l - r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedVelocity<T> {
    pub v: Vec<T>,
    pub w: T,
    pub r: T,
    pub stratum: usize,
    pub control: usize,
}

/// Essential and tangential control subsets at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlFeasibility<T> {
    pub point: Vec<T>,
    pub stratum: usize,
    /// Per stratum whose closure contains the point: admitted control indices.
    pub essential: Vec<(usize, Vec<usize>)>,
    pub tangential: Vec<usize>,
    pub tolerance: T,
}

impl<T> ControlFeasibility<T> {
    /// `(stratum, control)` pairs of the union `A^E(x)`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.essential
            .iter()
            .flat_map(|(s, cs)| cs.iter().map(move |&c| (*s, c)))
    }

    pub fn essential_of(&self, stratum: usize) -> &[usize] {
        self.essential
            .iter()
            .find(|(s, _)| *s == stratum)
            .map(|(_, c)| c.as_slice())
            .unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.essential.iter().map(|(_, c)| c.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Result of replacing a normal control by a tangential convex combination.
#[derive(Clone, Debug, PartialEq)]
pub enum Tangentialized<T> {
    Mixed {
        velocity: Vec<T>,
        cost_rate: T,
        partner: Option<usize>,
        weights: (T, T),
    },
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ControllabilityMode {
    H2,
    H3,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Verdict {
    Holds,
    EmptyTangential,
    BallRadius(f64),
    Violated,
}

#[derive(Clone, Debug, Serialize)]
pub struct StratumControllability {
    pub stratum: usize,
    pub samples: usize,
    /// Smallest inscribed radius of the essential velocity hull over samples.
    pub min_radius: f64,
    /// Smallest inscribed radius of the tangential velocities inside the
    /// tangent space (tangential controllability).
    pub min_tangential_radius: f64,
    pub empty_tangential: usize,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct ControllabilityReport {
    pub mode: ControllabilityMode,
    pub strata: Vec<StratumControllability>,
    pub holds: bool,
}

impl ControllabilityReport {
    pub fn min_radius(&self) -> f64 {
        self.strata.iter().map(|s| s.min_radius).fold(f64::INFINITY, f64::min)
    }

    /// Tangential controllability on every interface.
    pub fn tangential_holds(&self) -> bool {
        self.strata.iter().all(|s| s.min_tangential_radius > RADIUS_TOL)
    }
}

const RADIUS_TOL: f64 = 1e-9;

/// The control problem: dynamics, costs and horizon on a stratification.
#[derive(Clone, Debug)]
pub struct ControlProblem<T> {
    pub name: String,
    pub strat: Stratification<T>,
    pub controls: ControlSet<T>,
    pub pieces: Vec<Option<Piece<T>>>,
    pub terminal: TerminalCost<T>,
    pub terminal_mode: TerminalMode,
    pub growth: GrowthConstants<T>,
    pub horizon: T,
    pub perturbation: Option<Perturbation<T>>,
    /// Relative tangency band: `v` is tangential iff its distance to the
    /// cone is at most `tangency_eps (1 + |v|)`.
    pub tangency_eps: T,
}

impl<T: Scalar> ControlProblem<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        strat: Stratification<T>,
        controls: ControlSet<T>,
        pieces: Vec<Option<Piece<T>>>,
        terminal: TerminalCost<T>,
        terminal_mode: TerminalMode,
        growth: GrowthConstants<T>,
        horizon: T,
    ) -> Result<Self> {
        if pieces.len() != strat.len() {
            return Err(Error::InvalidArgument(format!(
                "{} pieces for {} strata",
                pieces.len(),
                strat.len()
            )));
        }
        for p in pieces.iter().flatten() {
            p.velocity.validate(strat.dim(), controls.dim())?;
        }
        if !(horizon > T::zero()) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if !(growth.c_f > T::zero()) || !(growth.c_l > T::zero()) {
            return Err(Error::InvalidArgument("c_f and c_l must be positive".into()));
        }
        if growth.lambda_l < T::one() || growth.lambda_phi < T::one() {
            return Err(Error::InvalidArgument("growth exponents must be >= 1".into()));
        }
        Ok(Self {
            name: name.into(),
            strat,
            controls,
            pieces,
            terminal,
            terminal_mode,
            growth,
            horizon,
            perturbation: None,
            tangency_eps: T::lit(1e-8),
        })
    }

    pub fn dim(&self) -> usize {
        self.strat.dim()
    }

    pub fn piece(&self, stratum: usize) -> Result<&Piece<T>> {
        match self.pieces.get(stratum) {
            Some(Some(p)) => Ok(p),
            Some(None) => Err(Error::StratumPieceMissing(stratum)),
            None => Err(Error::UnknownStratum(stratum)),
        }
    }

    /// Fails with `StratumPieceMissing` unless every stratum has a piece.
    pub fn require_all_pieces(&self) -> Result<()> {
        for s in 0..self.strat.len() {
            self.piece(s)?;
        }
        Ok(())
    }

    /// Copy with a perturbation applied; growth constants are enlarged to
    /// keep the bounds valid.
    pub fn perturbed(&self, p: Perturbation<T>) -> Self {
        let mut out = self.clone();
        out.growth.c_f += p.eps.abs() * norm(&p.velocity);
        out.growth.c_l += p.eps.abs() * p.cost_amplitude.abs();
        out.perturbation = Some(p);
        out
    }

    #[inline]
    pub fn tangency_tol(&self, v: &[T]) -> T {
        self.tangency_eps * (T::one() + norm(v))
    }

    /// Velocity of the piece of `stratum` at `x` for control `a`, no checks.
    #[inline]
    pub fn velocity_into(&self, piece: &Piece<T>, x: &[T], a: usize, out: &mut [T]) {
        piece.velocity.eval_into(x, self.controls.sample(a), out);
        if let Some(p) = &self.perturbation {
            for (o, &g) in out.iter_mut().zip(&p.velocity) {
                *o += p.eps * g;
            }
        }
    }

    #[inline]
    pub fn cost_of(&self, piece: &Piece<T>, x: &[T]) -> T {
        let mut l = piece.cost.eval(x);
        if let Some(p) = &self.perturbation {
            l += p.cost(x);
        }
        l
    }

    pub fn eval_f(&self, stratum: usize, x: &[T], a: usize) -> Result<Vec<T>> {
        let piece = self.piece(stratum)?;
        let mut v = vec![T::zero(); self.dim()];
        self.velocity_into(piece, x, a, &mut v);
        let bound = self.growth.speed_bound(x);
        if norm(&v) > bound * T::lit(1.01) {
            return Err(Error::GrowthViolation(format!(
                "|f| = {} exceeds c_f (1 + |x|) = {}",
                norm(&v),
                bound
            )));
        }
        Ok(v)
    }

    pub fn eval_l(&self, stratum: usize, x: &[T], _a: usize) -> Result<T> {
        let piece = self.piece(stratum)?;
        let l = self.cost_of(piece, x);
        let bound = self.growth.cost_bound(x);
        if l > bound * T::lit(1.01) {
            return Err(Error::GrowthViolation(format!(
                "l = {l} exceeds c_l (1 + |x|^lambda_l) = {bound}"
            )));
        }
        Ok(l)
    }

    /// Slack `b = c_l (1 + |x|^lambda_l) - l`, clamped at 0 inside `-1e-9`.
    pub fn eval_b(&self, stratum: usize, x: &[T], a: usize) -> Result<T> {
        let l = self.eval_l(stratum, x, a)?;
        Ok((self.growth.cost_bound(x) - l).max(T::zero()))
    }

    pub fn terminal_at(&self, x: &[T]) -> T {
        let mut v = self.terminal.eval(x);
        if let Some(p) = &self.perturbation {
            v += p.terminal(x);
        }
        v
    }

    pub fn terminal_limit(&self, x: &[T], approach: &[i8]) -> T {
        let mut v = self.terminal.limit(x, approach);
        if let Some(p) = &self.perturbation {
            v += p.terminal(x);
        }
        v
    }

    fn admitted(&self, stratum: usize, cone: &ConeDescriptor, x: &[T]) -> Result<Vec<usize>> {
        let piece = self.piece(stratum)?;
        let mut v = vec![T::zero(); self.dim()];
        let mut out = Vec::new();
        for a in 0..self.controls.len() {
            self.velocity_into(piece, x, a, &mut v);
            if cone.contains(&v, self.tangency_tol(&v)) {
                out.push(a);
            }
        }
        Ok(out)
    }

    /// Controls whose velocity (own piece) is tangent to the stratum of `x`.
    pub fn tangential_controls(&self, x: &[T]) -> Result<Vec<usize>> {
        let s = self.strat.locate(x);
        let cone = self.strat.tangent_space_of(s);
        self.admitted(s, &cone, x)
    }

    /// Essential controls: for every stratum whose closure contains `x`, the
    /// controls whose piece velocity at `x` lies in the tangent cone of that
    /// closure.
    pub fn essential_controls(&self, x: &[T]) -> Result<ControlFeasibility<T>> {
        let s = self.strat.locate(x);
        let mut essential = Vec::new();
        let mut tangential = Vec::new();
        for k in self.strat.incident_strata(s) {
            let cone = self.strat.closure_cone_at_face(k, s);
            let adm = self.admitted(k, &cone, x)?;
            if k == s {
                tangential = adm.clone();
            }
            essential.push((k, adm));
        }
        Ok(ControlFeasibility {
            point: x.to_vec(),
            stratum: s,
            essential,
            tangential,
            tolerance: self.tangency_eps,
        })
    }

    /// Velocities of the essential set, each with its zero-slack and
    /// extreme-slack augmented representative.
    pub fn augmented_essential(&self, x: &[T]) -> Result<Vec<AugmentedVelocity<T>>> {
        let feas = self.essential_controls(x)?;
        let mut out = Vec::new();
        for (s, a) in feas.pairs() {
            let v = self.eval_f(s, x, a)?;
            let l = self.eval_l(s, x, a)?;
            let b = self.eval_b(s, x, a)?;
            out.push(AugmentedVelocity {
                v: v.clone(),
                w: -l,
                r: T::zero(),
                stratum: s,
                control: a,
            });
            out.push(AugmentedVelocity {
                v,
                w: -l - b,
                r: b,
                stratum: s,
                control: a,
            });
        }
        Ok(out)
    }

    /// Mixes a normal control `a` at an interface point with an
    /// opposite-sign control so that the normal components cancel.
    pub fn tangentialize_control(&self, x: &[T], a: usize) -> Result<Tangentialized<T>> {
        let s = self.strat.locate(x);
        let st = self.strat.stratum(s)?;
        if st.kind != StratumKind::Interface || st.dim + 1 != self.dim() {
            return Err(Error::NotOnInterface);
        }
        let axis = (0..self.dim())
            .find(|&ax| self.strat.zero_plane_on_axis(s, ax).is_some())
            .ok_or(Error::NotOnInterface)?;
        let piece = self.piece(s)?;
        let mut fa = vec![T::zero(); self.dim()];
        self.velocity_into(piece, x, a, &mut fa);
        let la = self.cost_of(piece, x);
        let na = fa[axis];
        if na.abs() <= self.tangency_tol(&fa) {
            return Ok(Tangentialized::Mixed {
                velocity: fa,
                cost_rate: -la,
                partner: None,
                weights: (T::one(), T::zero()),
            });
        }
        let mut fb = vec![T::zero(); self.dim()];
        let mut best: Option<(usize, T)> = None;
        for b in 0..self.controls.len() {
            self.velocity_into(piece, x, b, &mut fb);
            let nb = fb[axis];
            if nb * na < T::zero() && nb.abs() > self.tangency_tol(&fb) {
                match best {
                    Some((_, g)) if g >= nb.abs() => {}
                    _ => best = Some((b, nb.abs())),
                }
            }
        }
        let Some((b, gamma)) = best else {
            return Ok(Tangentialized::Infeasible);
        };
        self.velocity_into(piece, x, b, &mut fb);
        let lb = self.cost_of(piece, x);
        let beta = na.abs();
        let wa = gamma / (beta + gamma);
        let wb = beta / (beta + gamma);
        let velocity: Vec<T> = fa.iter().zip(&fb).map(|(&u, &v)| wa * u + wb * v).collect();
        Ok(Tangentialized::Mixed {
            velocity,
            cost_rate: -(wa * la + wb * lb),
            partner: Some(b),
            weights: (wa, wb),
        })
    }

    /// Velocities of `A^E(x)` evaluated with their admitting pieces.
    pub fn essential_velocities(&self, x: &[T]) -> Result<Vec<Vec<T>>> {
        let feas = self.essential_controls(x)?;
        let mut out = Vec::with_capacity(feas.len());
        for (s, a) in feas.pairs() {
            let piece = self.piece(s)?;
            let mut v = vec![T::zero(); self.dim()];
            self.velocity_into(piece, x, a, &mut v);
            out.push(v);
        }
        Ok(out)
    }

    /// Samples every lower-dimensional stratum inside `[lo, hi]^d` and
    /// estimates the controllability radii.
    pub fn check_controllability(
        &self,
        mode: ControllabilityMode,
        sample_count: usize,
        lo: T,
        hi: T,
        seed: u64,
    ) -> Result<ControllabilityReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut strata = Vec::new();
        for st in self.strat.strata() {
            if st.kind == StratumKind::Cell {
                continue;
            }
            let tan_space = self.strat.tangent_space_of(st.id);
            let free: Vec<usize> = tan_space
                .constraints
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != crate::stratification::AxisConstraint::Zero)
                .map(|(i, _)| i)
                .collect();
            let mut min_radius = f64::INFINITY;
            let mut min_tan = f64::INFINITY;
            let mut empty = 0usize;
            let mut n = 0usize;
            for _ in 0..sample_count {
                let Some(x) = self.strat.sample_point(st.id, lo, hi, &mut rng) else {
                    continue;
                };
                n += 1;
                let vels = self.essential_velocities(&x)?;
                let r = inscribed_radius(&vels, self.dim())?.max(T::zero());
                min_radius = min_radius.min(r.as_f64());
                let tan = self.tangential_controls(&x)?;
                if tan.is_empty() {
                    empty += 1;
                    min_tan = 0.0;
                    continue;
                }
                let piece = self.piece(st.id)?;
                let projected: Vec<Vec<T>> = tan
                    .iter()
                    .map(|&a| {
                        let mut v = vec![T::zero(); self.dim()];
                        self.velocity_into(piece, &x, a, &mut v);
                        free.iter().map(|&i| v[i]).collect()
                    })
                    .collect();
                let rt = if free.is_empty() {
                    f64::INFINITY
                } else {
                    inscribed_radius(&projected, free.len())?.max(T::zero()).as_f64()
                };
                min_tan = min_tan.min(rt);
            }
            if n == 0 {
                continue;
            }
            let verdict = match mode {
                ControllabilityMode::H2 => {
                    if min_radius > RADIUS_TOL {
                        Verdict::Holds
                    } else {
                        Verdict::Violated
                    }
                }
                ControllabilityMode::H3 => {
                    if empty == n {
                        Verdict::EmptyTangential
                    } else if min_radius > RADIUS_TOL {
                        Verdict::BallRadius(min_radius)
                    } else {
                        Verdict::Violated
                    }
                }
            };
            strata.push(StratumControllability {
                stratum: st.id,
                samples: n,
                min_radius,
                min_tangential_radius: min_tan,
                empty_tangential: empty,
                verdict,
            });
        }
        let holds = strata.iter().all(|s| s.verdict != Verdict::Violated);
        Ok(ControllabilityReport { mode, strata, holds })
    }
}
