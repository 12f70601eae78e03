//! Backward semi-Lagrangian solver on a grid aligned with the hyperplanes.
//!
//! Continuous mode keeps one value per node and lets interface nodes use the
//! essential controls. LSC mode keeps one layer per stratum incident to a
//! node, so that one-sided limits across an interface are represented.

use crate::control::{ControlProblem, ControllabilityMode, TerminalMode};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stratification::{Stratification, StratumKind};
use crate::trajectory::ValueFunction;
use rayon::prelude::*;
use serde::Serialize;

const MAX_DIM: usize = 3;
const MAX_CORNERS: usize = 1 << MAX_DIM;
const MAX_LAYERS: usize = 27;
/// Interpolation weights this close to 0 or 1 are snapped.
const WEIGHT_SNAP: f64 = 1e-9;

/// Tensor grid on `[lo, hi]^d` with every hyperplane inside the box as an
/// exact grid plane. With a pad the nodes extend to `[lo - pad, hi + pad]^d`
/// at the same spacing; values are reported on `[lo, hi]^d` only.
#[derive(Clone, Debug)]
pub struct StratifiedGrid<T> {
    pub lo: T,
    pub hi: T,
    pub pad: T,
    /// Computational box.
    pub outer_lo: T,
    pub outer_hi: T,
    pub axes: Vec<Vec<T>>,
    pub node_stratum: Vec<usize>,
    pub steps: usize,
    pub dt: T,
    pub horizon: T,
    pub warnings: Vec<String>,
    nodes: usize,
    strides: Vec<usize>,
    /// `(n - 1) / (outer_hi - outer_lo)` per axis, for the interval guess.
    index_scale: Vec<T>,
}

impl<T: Scalar> StratifiedGrid<T> {
    /// `nodes` per axis before plane insertion, `steps` time steps on `[0, horizon]`.
    pub fn build(strat: &Stratification<T>, lo: T, hi: T, nodes: usize, steps: usize, horizon: T) -> Result<Self> {
        Self::build_padded(strat, lo, hi, nodes, steps, horizon, T::zero())
    }

    /// Grid padded by [`required_pad`], so that truncation at the computational
    /// box does not reach `[lo, hi]^d` within the horizon.
    pub fn for_problem(p: &ControlProblem<T>, lo: T, hi: T, nodes: usize, steps: usize) -> Result<Self> {
        let pad = required_pad(p, lo, hi, nodes);
        Self::build_padded(&p.strat, lo, hi, nodes, steps, p.horizon, pad)
    }

    /// Same box, resolution and time steps with another pad.
    pub fn with_pad(&self, strat: &Stratification<T>, pad: T) -> Result<Self> {
        Self::build_padded(strat, self.lo, self.hi, self.nodes, self.steps, self.horizon, pad)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn build_padded(
        strat: &Stratification<T>,
        lo: T,
        hi: T,
        nodes: usize,
        steps: usize,
        horizon: T,
        pad: T,
    ) -> Result<Self> {
        let d = strat.dim();
        if d > MAX_DIM {
            return Err(Error::InvalidArgument(format!("grids support dimension <= {MAX_DIM}")));
        }
        if !(lo < hi) || nodes < 2 || steps == 0 || !(horizon > T::zero()) || !(pad >= T::zero()) {
            return Err(Error::InvalidArgument(
                "grid needs lo < hi, at least 2 nodes per axis and at least one time step".into(),
            ));
        }
        let h = (hi - lo) / T::count(nodes - 1);
        let extra = (pad / h).ceil().to_usize().unwrap_or(0);
        let (olo, ohi) = (lo - h * T::count(extra), hi + h * T::count(extra));
        let total_nodes = nodes + 2 * extra;
        let mut warnings = Vec::new();
        let mut axes = Vec::with_capacity(d);
        for ax in 0..d {
            let mut coords: Vec<T> = (0..total_nodes)
                .map(|k| {
                    if k == extra {
                        lo
                    } else if k + 1 + extra == total_nodes {
                        hi
                    } else {
                        olo + h * T::count(k)
                    }
                })
                .collect();
            let mut pinned = vec![false; coords.len()];
            pinned[0] = true;
            *pinned.last_mut().unwrap() = true;
            pinned[extra] = true;
            pinned[extra + nodes - 1] = true;
            for plane in strat.planes_on_axis(ax) {
                let o = plane.offset;
                if o < lo || o > hi {
                    let msg = format!("hyperplane x{} = {} lies outside the box", ax + 1, o);
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
                if o < olo || o > ohi {
                    continue;
                }
                insert_plane(&mut coords, &mut pinned, o, h);
            }
            axes.push(coords);
        }
        let shape: Vec<usize> = axes.iter().map(|a| a.len()).collect();
        let mut strides = vec![1usize; d];
        for ax in (0..d.saturating_sub(1)).rev() {
            strides[ax] = strides[ax + 1] * shape[ax + 1];
        }
        let total: usize = shape.iter().product();
        let mut grid = Self {
            lo,
            hi,
            pad: h * T::count(extra),
            outer_lo: olo,
            outer_hi: ohi,
            axes,
            node_stratum: Vec::with_capacity(total),
            steps,
            dt: horizon / T::count(steps),
            horizon,
            index_scale: shape.iter().map(|&n| T::count(n - 1) / (ohi - olo)).collect(),
            warnings,
            nodes,
            strides,
        };
        let mut x = [T::zero(); MAX_DIM];
        for n in 0..total {
            grid.node_coords(n, &mut x);
            grid.node_stratum.push(strat.locate_with_tolerance(&x[..d], T::zero()));
        }
        Ok(grid)
    }

    /// CFL-style default `dt <= dx / (c_f (1 + |box|))`.
    pub fn default_steps(p: &ControlProblem<T>, lo: T, hi: T, nodes: usize) -> usize {
        let dx = (hi - lo) / T::count(nodes.max(2) - 1);
        let radius = lo.abs().max(hi.abs()) * T::count(p.dim()).sqrt();
        let speed = p.growth.c_f * (T::one() + radius);
        (p.horizon * speed / dx).ceil().to_usize().unwrap_or(1).max(1)
    }

    /// Nodes per axis of the reported box before plane insertion.
    pub fn base_nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.len()).collect()
    }

    pub fn node_count(&self) -> usize {
        self.node_stratum.len()
    }

    /// Largest spacing over all axes.
    pub fn dx(&self) -> T {
        self.axes
            .iter()
            .flat_map(|a| a.windows(2).map(|w| w[1] - w[0]))
            .fold(T::zero(), T::max)
    }

    pub fn time(&self, n: usize) -> T {
        if n == self.steps {
            self.horizon
        } else {
            self.dt * T::count(n)
        }
    }

    pub fn node_coords(&self, n: usize, out: &mut [T]) {
        let mut rem = n;
        for (ax, s) in self.strides.iter().enumerate() {
            let k = rem / s;
            rem %= s;
            out[ax] = self.axes[ax][k];
        }
    }

    pub fn node_point(&self, n: usize) -> Vec<T> {
        let mut x = vec![T::zero(); self.dim()];
        self.node_coords(n, &mut x);
        x
    }

    fn node_index_on_axis(&self, n: usize, ax: usize) -> usize {
        (n / self.strides[ax]) % self.axes[ax].len()
    }

    /// Interval `k` with `axes[k] <= c <= axes[k + 1]`.
    fn interval(&self, ax: usize, c: T) -> usize {
        let a = &self.axes[ax];
        let n = a.len();
        // c >= outer_lo, so truncation is the floor
        let mut k = ((c - self.outer_lo) * self.index_scale[ax]).to_usize().unwrap_or(0).min(n - 2);
        while k > 0 && a[k] > c {
            k -= 1;
        }
        while k + 2 < n && a[k + 1] <= c {
            k += 1;
        }
        k
    }

    fn inside(&self, x: &[T]) -> bool {
        let tol = (self.hi - self.lo) * T::lit(1e-12);
        x.iter().all(|&c| c >= self.lo - tol && c <= self.hi + tol)
    }

    /// Whether the node lies in the reported box `[lo, hi]^d`.
    pub fn in_box(&self, node: usize) -> bool {
        let mut x = [T::zero(); MAX_DIM];
        self.node_coords(node, &mut x);
        self.inside(&x[..self.dim()])
    }

    /// Nodes of the reported box, in index order.
    pub fn box_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&n| self.in_box(n)).collect()
    }

    /// Multilinear stencil at `y`; returns whether `y` left the computational
    /// box, in which case it is projected back. With `anchor`, axes on which
    /// `side` is nonzero use the grid interval on that side of the anchor node.
    fn stencil(&self, y: &[T], anchor: Option<(usize, &[i8])>, out: &mut Stencil<T>) -> bool {
        let d = self.dim();
        let mut clamped = false;
        let mut base = [0usize; MAX_DIM];
        let mut theta = [T::zero(); MAX_DIM];
        let snap = T::lit(WEIGHT_SNAP);
        for ax in 0..d {
            let a = &self.axes[ax];
            let forced = anchor.and_then(|(node, side)| {
                (side[ax] != 0).then(|| {
                    let k = self.node_index_on_axis(node, ax);
                    if side[ax] > 0 {
                        k.min(a.len() - 2)
                    } else {
                        k.max(1) - 1
                    }
                })
            });
            let (k, th) = match forced {
                Some(k) => (k, (y[ax] - a[k]) / (a[k + 1] - a[k])),
                None => {
                    let mut c = y[ax];
                    if c < self.outer_lo || c > self.outer_hi {
                        clamped = true;
                        c = c.max(self.outer_lo).min(self.outer_hi);
                    }
                    let k = self.interval(ax, c);
                    (k, (c - a[k]) / (a[k + 1] - a[k]))
                }
            };
            let th = if th.abs() < snap {
                T::zero()
            } else if (th - T::one()).abs() < snap {
                T::one()
            } else {
                th
            };
            base[ax] = k;
            theta[ax] = th;
        }
        out.nodes[0] = (0..d).map(|ax| base[ax] * self.strides[ax]).sum();
        out.weights[0] = T::one();
        out.len = 1;
        for ax in 0..d {
            let th = theta[ax];
            if th == T::zero() {
                continue;
            }
            let n = out.len;
            if th == T::one() {
                for node in &mut out.nodes[..n] {
                    *node += self.strides[ax];
                }
                continue;
            }
            for i in 0..n {
                let w = out.weights[i];
                out.nodes[n + i] = out.nodes[i] + self.strides[ax];
                out.weights[n + i] = w * th;
                out.weights[i] = w * (T::one() - th);
            }
            out.len = 2 * n;
        }
        clamped
    }
}

/// Pad that keeps the computational boundary out of the reported box: the
/// distance a characteristic travels within the horizon plus a few cells for
/// numerical diffusion. Speeds are maximised over the vertices of the padded
/// box, exact for affine velocities.
pub fn required_pad<T: Scalar>(p: &ControlProblem<T>, lo: T, hi: T, nodes: usize) -> T {
    let d = p.dim();
    let h = (hi - lo) / T::count(nodes.max(2) - 1);
    let mut v = vec![T::zero(); d];
    let mut x = vec![T::zero(); d];
    let mut pad = T::zero();
    for _ in 0..8 {
        let mut speed = T::zero();
        for corner in 0..(1usize << d) {
            for (i, xi) in x.iter_mut().enumerate() {
                *xi = if corner >> i & 1 == 1 { hi + pad } else { lo - pad };
            }
            for piece in p.pieces.iter().flatten() {
                for a in 0..p.controls.len() {
                    p.velocity_into(piece, &x, a, &mut v);
                    speed = speed.max(v.iter().fold(T::zero(), |m, &c| m.max(c.abs())));
                }
            }
        }
        let next = p.horizon * speed + h * T::count(4);
        if next <= pad * (T::one() + T::lit(1e-9)) {
            break;
        }
        pad = next;
    }
    pad
}

fn insert_plane<T: Scalar>(coords: &mut Vec<T>, pinned: &mut Vec<bool>, o: T, h: T) {
    let n = coords.len();
    let mut k = 0;
    while k + 1 < n && coords[k + 1] <= o {
        k += 1;
    }
    // nearest node
    let near = if k + 1 < n && (coords[k + 1] - o).abs() < (o - coords[k]).abs() { k + 1 } else { k };
    if (coords[near] - o).abs() <= h * T::lit(0.25) && (!pinned[near] || coords[near] == o) {
        coords[near] = o;
        pinned[near] = true;
        return;
    }
    // insert between k and k + 1, then even out the short side
    coords.insert(k + 1, o);
    pinned.insert(k + 1, true);
    let left = o - coords[k];
    let right = coords[k + 2] - o;
    let tiny = h * T::lit(1e-9);
    if left < h * T::lit(0.5) - tiny && k >= 1 && !pinned[k] {
        coords[k] = (coords[k - 1] + o) * T::lit(0.5);
    } else if right < h * T::lit(0.5) - tiny && k + 3 < coords.len() && !pinned[k + 2] {
        coords[k + 2] = (o + coords[k + 3]) * T::lit(0.5);
    }
}

#[derive(Clone, Copy)]
struct Stencil<T> {
    nodes: [usize; MAX_CORNERS],
    weights: [T; MAX_CORNERS],
    len: usize,
}

impl<T: Scalar> Stencil<T> {
    fn new() -> Self {
        Self {
            nodes: [0; MAX_CORNERS],
            weights: [T::zero(); MAX_CORNERS],
            len: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolveMode {
    Continuous,
    Lsc,
}

/// Interface treatment of the continuous scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum InterfaceRule {
    /// Essential controls, each with the piece that admits it.
    Essential,
    /// Tangential controls plus the inward controls of the adjacent cells,
    /// the latter interpolated on a stencil forced to their own cell's side.
    TangentialPlusCells,
}

/// Values on the space-time grid; in LSC mode one value per node and per
/// stratum incident to the node.
#[derive(Clone, Debug)]
pub struct ValueGrid<T> {
    pub mode: SolveMode,
    pub grid: StratifiedGrid<T>,
    /// Layer `j` of node `n` is entry `offsets[n] + j`.
    pub offsets: Vec<usize>,
    pub layer_strata: Vec<usize>,
    /// `values[n]` holds the layer values at time `t_n`.
    pub values: Vec<Vec<T>>,
    pub clamped_updates: usize,
    pub total_updates: usize,
    strat: Stratification<T>,
}

impl<T: Scalar> ValueGrid<T> {
    pub fn layers(&self, node: usize) -> std::ops::Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }

    /// Value of `node` at step `n`: the lower envelope over its layers.
    pub fn node_value(&self, n: usize, node: usize) -> T {
        self.values[n][self.layers(node)].iter().copied().fold(T::infinity(), T::min)
    }

    fn read(&self, prev: &[T], node: usize, prefer: Option<usize>) -> T {
        read_layer(&self.offsets, &self.layer_strata, prev, node, prefer)
    }

    fn spatial(&self, vals: &[T], x: &[T]) -> T {
        let mut st = Stencil::new();
        self.grid.stencil(x, None, &mut st);
        match self.mode {
            SolveMode::Continuous => (0..st.len).map(|i| st.weights[i] * vals[st.nodes[i]]).fold(T::zero(), |a, b| a + b),
            SolveMode::Lsc => {
                let s = self.strat.locate(x);
                self.strat
                    .incident_strata(s)
                    .into_iter()
                    .map(|k| {
                        (0..st.len)
                            .map(|i| st.weights[i] * self.read(vals, st.nodes[i], Some(k)))
                            .fold(T::zero(), |a, b| a + b)
                    })
                    .fold(T::infinity(), T::min)
            }
        }
    }

    /// Linear in time between steps, multilinear in space.
    pub fn query(&self, t: T, x: &[T]) -> Result<T> {
        let g = &self.grid;
        let ttol = g.dt * T::lit(1e-9);
        if x.len() != g.dim() || !g.inside(x) || t < -ttol || t > g.horizon + ttol {
            return Err(Error::OutOfRange(format!("query at t = {t}, x = {x:?}")));
        }
        let t = t.max(T::zero()).min(g.horizon);
        let s = t / g.dt;
        let n = s.floor().to_usize().unwrap_or(0).min(g.steps - 1);
        let th = s - T::count(n);
        let x: Vec<T> = x.iter().map(|&c| c.max(g.lo).min(g.hi)).collect();
        let v0 = self.spatial(&self.values[n], &x);
        if th <= T::lit(1e-12) {
            return Ok(v0);
        }
        let v1 = self.spatial(&self.values[n + 1], &x);
        if th >= T::one() - T::lit(1e-12) {
            return Ok(v1);
        }
        Ok((T::one() - th) * v0 + th * v1)
    }

    /// Fraction of node updates in the reported box whose optimal foot point
    /// left the computational box.
    pub fn clamp_fraction(&self) -> f64 {
        if self.total_updates == 0 {
            0.0
        } else {
            self.clamped_updates as f64 / self.total_updates as f64
        }
    }

    /// Whether the node lies on a lower dimensional stratum.
    pub fn on_interface(&self, node: usize) -> bool {
        self.strat.strata()[self.grid.node_stratum[node]].kind != StratumKind::Cell
    }

    /// Pointwise node values at step `n`.
    pub fn node_values(&self, n: usize) -> Vec<T> {
        (0..self.grid.node_count()).map(|i| self.node_value(n, i)).collect()
    }
}

impl<T: Scalar> ValueFunction<T> for ValueGrid<T> {
    fn value(&self, t: T, x: &[T]) -> Result<T> {
        self.query(t, x)
    }
}

fn read_layer<T: Scalar>(offsets: &[usize], layer_strata: &[usize], vals: &[T], node: usize, prefer: Option<usize>) -> T {
    let (a, b) = (offsets[node], offsets[node + 1]);
    if b - a == 1 {
        return vals[a];
    }
    if let Some(k) = prefer {
        for j in a..b {
            if layer_strata[j] == k {
                return vals[j];
            }
        }
    }
    vals[a..b].iter().copied().fold(T::infinity(), T::min)
}

/// Marks a stencil entry that reads the lower envelope of a node's layers.
const ENVELOPE: usize = 1 << (usize::BITS - 1);

/// One admissible control at one node, reduced to `dt l` and a foot-point
/// stencil over value indices.
#[derive(Clone, Copy)]
struct Candidate<T> {
    start: usize,
    len: u8,
    layer: u8,
    clamped: bool,
    run_cost: T,
}

/// Time-independent part of the scheme. Dynamics and costs are autonomous,
/// so every foot point and stencil is computed once.
struct Plan<T> {
    mode: SolveMode,
    node_cands: Vec<usize>,
    cands: Vec<Candidate<T>>,
    entries: Vec<(usize, T)>,
    /// Bit `j`: layer `j` of the node has a strictly outward control.
    outward: Vec<u32>,
    own_layer: Vec<u8>,
}

#[derive(Clone, Copy)]
enum Prefer {
    None,
    Stratum(usize),
    ClosureOr(usize),
}

struct Planner<'a, T> {
    p: &'a ControlProblem<T>,
    grid: &'a StratifiedGrid<T>,
    mode: SolveMode,
    offsets: &'a [usize],
    layer_strata: &'a [usize],
}

impl<T: Scalar> Planner<'_, T> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &self,
        plan: &mut Plan<T>,
        node: usize,
        x: &[T],
        v: &[T],
        run_cost: T,
        layer: usize,
        prefer: Prefer,
        anchor: Option<&[i8]>,
    ) {
        let d = x.len();
        let mut y = [T::zero(); MAX_DIM];
        for i in 0..d {
            y[i] = x[i] + self.grid.dt * v[i];
        }
        let y = &y[..d];
        let want = match prefer {
            Prefer::None => None,
            Prefer::Stratum(q) => Some(q),
            Prefer::ClosureOr(q) => {
                // a foot on an interface reads the value there, not a one-sided limit
                let at = self.p.strat.locate(y);
                Some(if self.p.strat.strata()[at].kind == StratumKind::Cell && self.p.strat.in_closure(q, y) { q } else { at })
            }
        };
        let mut st = Stencil::new();
        let clamped = self.grid.stencil(y, anchor.map(|side| (node, side)), &mut st);
        let start = plan.entries.len();
        for i in 0..st.len {
            let z = st.nodes[i];
            let idx = match self.mode {
                SolveMode::Continuous => z,
                SolveMode::Lsc => layer_index(self.offsets, self.layer_strata, z, want),
            };
            plan.entries.push((idx, st.weights[i]));
        }
        plan.cands.push(Candidate {
            start,
            len: st.len as u8,
            layer: layer as u8,
            clamped,
            run_cost,
        });
    }

    fn plan_node(&self, plan: &mut Plan<T>, node: usize, rule: InterfaceRule) {
        let d = self.grid.dim();
        let p = self.p;
        let x = self.grid.node_point(node);
        let s = self.grid.node_stratum[node];
        let na = p.controls.len();
        let mut v = vec![T::zero(); d];
        let mut outward = 0u32;
        let incident: Vec<usize> = if p.strat.strata()[s].kind == StratumKind::Cell {
            vec![s]
        } else {
            p.strat.incident_strata(s)
        };
        let single = incident.len() == 1;
        let mut own = 0u8;
        for (j, &k) in incident.iter().enumerate() {
            if k == s {
                own = j as u8;
            }
            let piece = p.pieces[k].as_ref().expect("pieces validated");
            let run_cost = self.grid.dt * p.cost_of(piece, &x);
            let side = approach_sides(&p.strat, s, k);
            let cone = if single {
                None
            } else if k == s {
                Some(p.strat.tangent_space_of(s))
            } else {
                Some(p.strat.closure_cone_at_face(k, s))
            };
            let prefer = match self.mode {
                SolveMode::Continuous => Prefer::None,
                SolveMode::Lsc if single => Prefer::ClosureOr(s),
                SolveMode::Lsc if k == s => Prefer::Stratum(s),
                SolveMode::Lsc => Prefer::ClosureOr(k),
            };
            // continuous mode keeps a single layer
            let layer = if self.mode == SolveMode::Continuous { 0 } else { j };
            for a in 0..na {
                p.velocity_into(piece, &x, a, &mut v);
                let inward = cone.as_ref().is_none_or(|c| c.contains(&v, p.tangency_tol(&v)));
                if !inward {
                    outward |= 1 << j;
                } else if rule == InterfaceRule::TangentialPlusCells && !single && k != s {
                    self.push(plan, node, &x, &v, run_cost, layer, prefer, Some(&side[..d]));
                } else {
                    self.push(plan, node, &x, &v, run_cost, layer, prefer, None);
                }
            }
        }
        plan.outward.push(outward);
        plan.own_layer.push(own);
        plan.node_cands.push(plan.cands.len());
    }
}

fn layer_index(offsets: &[usize], layer_strata: &[usize], node: usize, want: Option<usize>) -> usize {
    let (a, b) = (offsets[node], offsets[node + 1]);
    if b - a == 1 {
        return a;
    }
    if let Some(k) = want {
        if let Some(j) = (a..b).find(|&j| layer_strata[j] == k) {
            return j;
        }
    }
    ENVELOPE | node
}

impl<T: Scalar> Plan<T> {
    #[inline]
    fn eval(&self, c: &Candidate<T>, prev: &[T], offsets: &[usize]) -> T {
        let mut v = c.run_cost;
        for &(idx, w) in &self.entries[c.start..c.start + c.len as usize] {
            let val = if idx & ENVELOPE == 0 {
                prev[idx]
            } else {
                let n = idx & !ENVELOPE;
                prev[offsets[n]..offsets[n + 1]].iter().copied().fold(T::infinity(), T::min)
            };
            v += w * val;
        }
        v
    }

    /// Writes the node's layer values at the earlier step; returns whether
    /// the optimal foot point left the box.
    fn update(&self, prev: &[T], offsets: &[usize], node: usize, out: &mut [T]) -> bool {
        let cands = &self.cands[self.node_cands[node]..self.node_cands[node + 1]];
        match self.mode {
            SolveMode::Continuous => {
                let mut best = T::infinity();
                let mut clamped = false;
                for c in cands {
                    let v = self.eval(c, prev, offsets);
                    // a tie with an in-box foot point is not a clamp
                    if v < best || (clamped && !c.clamped && near(v, best)) {
                        best = v;
                        clamped = c.clamped;
                    }
                }
                out[0] = best;
                clamped
            }
            SolveMode::Lsc => {
                let n_layers = out.len();
                let mut inward = [T::infinity(); MAX_LAYERS];
                let mut clamped_at = [false; MAX_LAYERS];
                for c in cands {
                    let v = self.eval(c, prev, offsets);
                    let j = c.layer as usize;
                    if v < inward[j] || (clamped_at[j] && !c.clamped && near(v, inward[j])) {
                        inward[j] = v;
                        clamped_at[j] = c.clamped;
                    }
                }
                // best over all layers: the own layer may leave into any cell
                let mut best = T::infinity();
                let mut clamped = false;
                for j in 0..n_layers {
                    if inward[j] < best || (clamped && !clamped_at[j] && near(inward[j], best)) {
                        best = inward[j];
                        clamped = clamped_at[j];
                    }
                }
                let own = self.own_layer[node] as usize;
                for (j, o) in out.iter_mut().enumerate() {
                    *o = if j == own || (self.outward[node] >> j) & 1 == 1 {
                        best.min(inward[j])
                    } else {
                        inward[j]
                    };
                }
                clamped
            }
        }
    }
}

#[inline]
fn near<T: Scalar>(a: T, b: T) -> bool {
    (a - b).abs() <= T::lit(1e-12) * (T::one() + b.abs())
}

fn build_plan<T: Scalar>(
    p: &ControlProblem<T>,
    grid: &StratifiedGrid<T>,
    mode: SolveMode,
    rule: InterfaceRule,
    offsets: &[usize],
    layer_strata: &[usize],
) -> Plan<T> {
    let planner = Planner {
        p,
        grid,
        mode,
        offsets,
        layer_strata,
    };
    let mut plan = Plan {
        mode,
        node_cands: vec![0],
        cands: Vec::new(),
        entries: Vec::new(),
        outward: Vec::new(),
        own_layer: Vec::new(),
    };
    for node in 0..grid.node_count() {
        planner.plan_node(&mut plan, node, rule);
    }
    plan
}

/// Per axis, the side (sign) of stratum `k` relative to the plane that the
/// face `s` lies on, 0 where `s` is not constrained.
fn approach_sides<T: Scalar>(strat: &Stratification<T>, s: usize, k: usize) -> [i8; MAX_DIM] {
    let mut side = [0i8; MAX_DIM];
    let sig = &strat.strata()[k].signature;
    for (ax, sd) in side.iter_mut().enumerate().take(strat.dim()) {
        if let Some(pl) = strat.zero_plane_on_axis(s, ax) {
            *sd = sig[pl];
        }
    }
    side
}

/// Solves the essential-Hamiltonian system with continuous terminal data.
pub fn solve_continuous<T: Scalar>(p: &ControlProblem<T>, grid: &StratifiedGrid<T>) -> Result<ValueGrid<T>> {
    solve_continuous_with(p, grid, InterfaceRule::Essential)
}

pub fn solve_continuous_with<T: Scalar>(
    p: &ControlProblem<T>,
    grid: &StratifiedGrid<T>,
    rule: InterfaceRule,
) -> Result<ValueGrid<T>> {
    if p.terminal_mode != TerminalMode::Lipschitz {
        return Err(Error::TerminalModeMismatch(
            "continuous mode needs Lipschitz terminal data; use the lsc mode".into(),
        ));
    }
    warn_if_uncontrollable(p, grid);
    solve_impl(p, grid, SolveMode::Continuous, rule)
}

/// Solves the bilateral system with layered values.
pub fn solve_lsc<T: Scalar>(p: &ControlProblem<T>, grid: &StratifiedGrid<T>) -> Result<ValueGrid<T>> {
    solve_impl(p, grid, SolveMode::Lsc, InterfaceRule::Essential)
}

pub fn solve<T: Scalar>(p: &ControlProblem<T>, grid: &StratifiedGrid<T>, mode: SolveMode) -> Result<ValueGrid<T>> {
    match mode {
        SolveMode::Continuous => solve_continuous(p, grid),
        SolveMode::Lsc => solve_lsc(p, grid),
    }
}

fn warn_if_uncontrollable<T: Scalar>(p: &ControlProblem<T>, grid: &StratifiedGrid<T>) {
    if let Ok(rep) = p.check_controllability(ControllabilityMode::H2, 8, grid.lo, grid.hi, 0) {
        if !rep.holds {
            log::warn!("{}: interface controllability fails; the continuous solution may not be unique", p.name);
        }
    }
}

fn solve_impl<T: Scalar>(
    p: &ControlProblem<T>,
    grid: &StratifiedGrid<T>,
    mode: SolveMode,
    rule: InterfaceRule,
) -> Result<ValueGrid<T>> {
    p.require_all_pieces()?;
    if grid.dim() != p.dim() {
        return Err(Error::InvalidArgument("grid and problem dimensions differ".into()));
    }
    if (grid.horizon - p.horizon).abs() > T::lit(1e-12) * (T::one() + p.horizon) {
        return Err(Error::InvalidArgument("grid horizon differs from the problem horizon".into()));
    }
    let nn = grid.node_count();
    let mut offsets = Vec::with_capacity(nn + 1);
    let mut layer_strata = Vec::new();
    offsets.push(0);
    for n in 0..nn {
        let s = grid.node_stratum[n];
        match mode {
            SolveMode::Continuous => layer_strata.push(s),
            SolveMode::Lsc => layer_strata.extend(p.strat.incident_strata(s)),
        }
        offsets.push(layer_strata.len());
    }
    let plan = build_plan(p, grid, mode, rule, &offsets, &layer_strata);
    let d = grid.dim();

    // terminal layer: phi at the node, one-sided limits on the other layers
    let mut terminal = vec![T::zero(); layer_strata.len()];
    for n in 0..nn {
        let x = grid.node_point(n);
        let s = grid.node_stratum[n];
        for j in offsets[n]..offsets[n + 1] {
            let k = layer_strata[j];
            terminal[j] = if k == s {
                p.terminal_at(&x)
            } else {
                let side = approach_sides(&p.strat, s, k);
                p.terminal_limit(&x, &side[..d])
            };
        }
    }
    // clamps in the pad are expected; only the reported box counts
    let counted: Vec<bool> = (0..nn).map(|n| grid.in_box(n)).collect();
    let mut values = vec![Vec::new(); grid.steps + 1];
    values[grid.steps] = terminal;
    let mut clamped_updates = 0usize;
    for n in (0..grid.steps).rev() {
        let prev = &values[n + 1];
        let mut next = vec![T::zero(); layer_strata.len()];
        let mut slices: Vec<&mut [T]> = Vec::with_capacity(nn);
        let mut rest: &mut [T] = &mut next;
        for node in 0..nn {
            let (a, b) = rest.split_at_mut(offsets[node + 1] - offsets[node]);
            slices.push(a);
            rest = b;
        }
        clamped_updates += slices
            .into_par_iter()
            .enumerate()
            .map(|(node, out)| usize::from(plan.update(prev, &offsets, node, out) && counted[node]))
            .sum::<usize>();
        values[n] = next;
    }
    let total_updates = counted.iter().filter(|&&c| c).count() * grid.steps;
    if clamped_updates as f64 > 0.05 * total_updates as f64 {
        return Err(Error::BoxTooSmall {
            clamped: clamped_updates,
            total: total_updates,
        });
    }
    Ok(ValueGrid {
        mode,
        grid: grid.clone(),
        offsets,
        layer_strata,
        values,
        clamped_updates,
        total_updates,
        strat: p.strat.clone(),
    })
}
