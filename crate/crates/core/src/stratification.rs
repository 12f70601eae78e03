//! Cellular decomposition of R^d induced by axis-aligned hyperplanes.
//!
//! Every point of R^d carries a sign signature: one entry in {-1, 0, +1} per
//! hyperplane, telling on which side of (or on) the plane it lies. Strata are
//! the realizable signatures. A stratum `S` lies in the closure of `S'` iff
//! the signature of `S` is obtained from the one of `S'` by zeroing entries.
//!
//! Hyperplanes are stored sorted by `(axis, offset)` and strata ids follow the
//! lexicographic order of their signatures, so ids are deterministic.

use crate::error::{Error, Result};
use crate::scalar::{dist, total_cmp, Scalar};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// The plane `{x[axis] = offset}` with normal `+e_axis`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane<T> {
    pub axis: usize,
    pub offset: T,
}

impl<T: Scalar> Hyperplane<T> {
    pub fn new(axis: usize, offset: T) -> Self {
        Self { axis, offset }
    }

    pub fn normal(&self, dim: usize) -> Vec<T> {
        let mut n = vec![T::zero(); dim];
        n[self.axis] = T::one();
        n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StratumKind {
    Cell,
    Interface,
    Intersection,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub id: usize,
    pub signature: Vec<i8>,
    pub dim: usize,
    pub kind: StratumKind,
}

impl Stratum {
    pub fn is_cell(&self) -> bool {
        self.kind == StratumKind::Cell
    }
}

/// Band around each hyperplane inside which a point counts as lying on it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SnapTolerance<T> {
    /// `scale * (1 + |offset|)` per plane.
    Relative(T),
    Absolute(T),
}

impl<T: Scalar> Default for SnapTolerance<T> {
    fn default() -> Self {
        SnapTolerance::Relative(T::lit(1e-9))
    }
}

/// Per-axis constraint of a polyhedral cone aligned with the coordinate axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisConstraint {
    Free,
    Zero,
    NonNegative,
    NonPositive,
}

/// Tangent cone of a stratum (a linear subspace) or of a stratum closure at
/// a boundary point (an intersection of coordinate half-spaces).
#[derive(Clone, Debug, PartialEq)]
pub struct ConeDescriptor {
    pub constraints: Vec<AxisConstraint>,
}

impl ConeDescriptor {
    pub fn whole_space(dim: usize) -> Self {
        Self {
            constraints: vec![AxisConstraint::Free; dim],
        }
    }

    /// Euclidean distance from `v` to the cone.
    pub fn distance<T: Scalar>(&self, v: &[T]) -> T {
        let mut acc = T::zero();
        for (c, &x) in self.constraints.iter().zip(v) {
            let e = match c {
                AxisConstraint::Free => T::zero(),
                AxisConstraint::Zero => x,
                AxisConstraint::NonNegative => x.min(T::zero()),
                AxisConstraint::NonPositive => x.max(T::zero()),
            };
            acc += e * e;
        }
        acc.sqrt()
    }

    pub fn contains<T: Scalar>(&self, v: &[T], tol: T) -> bool {
        self.distance(v) <= tol
    }

    /// Nearest point of the cone.
    pub fn project<T: Scalar>(&self, v: &[T]) -> Vec<T> {
        self.constraints
            .iter()
            .zip(v)
            .map(|(c, &x)| match c {
                AxisConstraint::Free => x,
                AxisConstraint::Zero => T::zero(),
                AxisConstraint::NonNegative => x.max(T::zero()),
                AxisConstraint::NonPositive => x.min(T::zero()),
            })
            .collect()
    }

    /// True when the cone is a linear subspace.
    pub fn is_subspace(&self) -> bool {
        self.constraints
            .iter()
            .all(|c| matches!(c, AxisConstraint::Free | AxisConstraint::Zero))
    }

    pub fn subspace_dim(&self) -> usize {
        self.constraints
            .iter()
            .filter(|c| **c != AxisConstraint::Zero)
            .count()
    }
}

#[derive(Clone, Debug)]
pub struct Stratification<T> {
    dim: usize,
    hyperplanes: Vec<Hyperplane<T>>,
    strata: Vec<Stratum>,
    snap: SnapTolerance<T>,
    /// Hyperplane indices per axis, ascending offset.
    planes_by_axis: Vec<Vec<usize>>,
    /// Mixed-radix strides over per-axis region indices.
    strides: Vec<usize>,
    region_to_id: Vec<usize>,
}

impl<T: Scalar> Stratification<T> {
    /// Builds the full complex with the default snap band `1e-9 (1 + |offset|)`.
    pub fn new(dim: usize, hyperplanes: Vec<Hyperplane<T>>) -> Result<Self> {
        Self::with_snap(dim, hyperplanes, SnapTolerance::default())
    }

    pub fn with_snap_tolerance(
        dim: usize,
        hyperplanes: Vec<Hyperplane<T>>,
        snap_tolerance: T,
    ) -> Result<Self> {
        Self::with_snap(dim, hyperplanes, SnapTolerance::Absolute(snap_tolerance))
    }

    pub fn with_snap(
        dim: usize,
        mut hyperplanes: Vec<Hyperplane<T>>,
        snap: SnapTolerance<T>,
    ) -> Result<Self> {
        if dim < 1 {
            return Err(Error::NonPositiveDimension(dim));
        }
        let tol = match snap {
            SnapTolerance::Relative(t) | SnapTolerance::Absolute(t) => t,
        };
        if !(tol >= T::zero()) {
            return Err(Error::NegativeSnapTolerance(tol.as_f64()));
        }
        for h in &hyperplanes {
            if h.axis >= dim {
                return Err(Error::InvalidAxis { axis: h.axis, dim });
            }
            if !h.offset.is_finite() {
                return Err(Error::InvalidArgument("non-finite hyperplane offset".into()));
            }
        }
        hyperplanes.sort_by(|a, b| a.axis.cmp(&b.axis).then(total_cmp(&a.offset, &b.offset)));
        for w in hyperplanes.windows(2) {
            if w[0].axis == w[1].axis && w[0].offset == w[1].offset {
                return Err(Error::DuplicateHyperplane {
                    axis: w[0].axis,
                    offset: w[0].offset.as_f64(),
                });
            }
        }

        let mut planes_by_axis = vec![Vec::new(); dim];
        for (k, h) in hyperplanes.iter().enumerate() {
            planes_by_axis[h.axis].push(k);
        }
        let radices: Vec<usize> = planes_by_axis.iter().map(|p| 2 * p.len() + 1).collect();
        let mut strides = vec![1usize; dim];
        for a in 1..dim {
            strides[a] = strides[a - 1] * radices[a - 1];
        }
        let total: usize = radices.iter().product();

        let mut entries: Vec<(Vec<i8>, usize)> = Vec::with_capacity(total);
        let mut regions = vec![0usize; dim];
        for flat in 0..total {
            let mut rem = flat;
            for a in 0..dim {
                regions[a] = rem % radices[a];
                rem /= radices[a];
            }
            let sig = signature_of_regions(&hyperplanes, &planes_by_axis, &regions);
            entries.push((sig, flat));
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));

        let mut region_to_id = vec![0usize; total];
        let mut strata = Vec::with_capacity(total);
        for (id, (sig, flat)) in entries.into_iter().enumerate() {
            region_to_id[flat] = id;
            let zero_axes = zero_axes(&hyperplanes, &sig, dim);
            let sdim = dim - zero_axes;
            let kind = match zero_axes {
                0 => StratumKind::Cell,
                1 => StratumKind::Interface,
                _ => StratumKind::Intersection,
            };
            strata.push(Stratum {
                id,
                signature: sig,
                dim: sdim,
                kind,
            });
        }

        Ok(Self {
            dim,
            hyperplanes,
            strata,
            snap,
            planes_by_axis,
            strides,
            region_to_id,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hyperplanes(&self) -> &[Hyperplane<T>] {
        &self.hyperplanes
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn stratum(&self, id: usize) -> Result<&Stratum> {
        self.strata.get(id).ok_or(Error::UnknownStratum(id))
    }

    pub fn snap(&self) -> SnapTolerance<T> {
        self.snap
    }

    pub fn planes_on_axis(&self, axis: usize) -> impl Iterator<Item = &Hyperplane<T>> + '_ {
        self.planes_by_axis[axis].iter().map(move |&k| &self.hyperplanes[k])
    }

    pub fn snap_tolerance_of(&self, plane: usize) -> T {
        match self.snap {
            SnapTolerance::Relative(s) => s * (T::one() + self.hyperplanes[plane].offset.abs()),
            SnapTolerance::Absolute(t) => t,
        }
    }

    /// Id of the unique stratum containing `x`.
    pub fn locate(&self, x: &[T]) -> usize {
        self.locate_impl(x, None)
    }

    /// Like [`locate`](Self::locate) with an explicit snap band (0 = exact).
    pub fn locate_with_tolerance(&self, x: &[T], tol: T) -> usize {
        self.locate_impl(x, Some(tol))
    }

    fn locate_impl(&self, x: &[T], tol: Option<T>) -> usize {
        debug_assert_eq!(x.len(), self.dim);
        let mut flat = 0usize;
        for a in 0..self.dim {
            let r = self.region_on_axis(a, x[a], tol);
            flat += r * self.strides[a];
        }
        self.region_to_id[flat]
    }

    fn region_on_axis(&self, axis: usize, xa: T, tol: Option<T>) -> usize {
        let planes = &self.planes_by_axis[axis];
        for (j, &k) in planes.iter().enumerate() {
            let o = self.hyperplanes[k].offset;
            let band = tol.unwrap_or_else(|| self.snap_tolerance_of(k));
            if (xa - o).abs() <= band {
                return 2 * j + 1;
            }
            if xa < o {
                return 2 * j;
            }
        }
        2 * planes.len()
    }

    pub fn signature_of(&self, x: &[T]) -> &[i8] {
        &self.strata[self.locate(x)].signature
    }

    /// Stratum with the given signature, if it is realizable.
    pub fn stratum_by_signature(&self, sig: &[i8]) -> Option<usize> {
        if sig.len() != self.hyperplanes.len() {
            return None;
        }
        let mut flat = 0usize;
        for a in 0..self.dim {
            let planes = &self.planes_by_axis[a];
            // region index: count of planes strictly below plus zero marker
            let mut region = None;
            let mut below = 0usize;
            for (j, &k) in planes.iter().enumerate() {
                match sig[k] {
                    0 => {
                        if region.is_some() {
                            return None;
                        }
                        region = Some(2 * j + 1);
                    }
                    1 => below = j + 1,
                    _ => {}
                }
            }
            let r = region.unwrap_or(2 * below);
            signature_of_regions_axis(planes, r, sig)?;
            flat += r * self.strides[a];
        }
        Some(self.region_to_id[flat])
    }

    /// True when the stratum `sub` lies in the closure of `sup`.
    pub fn is_face_of(&self, sub: usize, sup: usize) -> bool {
        let a = &self.strata[sub].signature;
        let b = &self.strata[sup].signature;
        a.iter().zip(b).all(|(&s, &t)| s == t || s == 0)
    }

    pub fn in_closure(&self, id: usize, x: &[T]) -> bool {
        self.is_face_of(self.locate(x), id)
    }

    /// All strata whose closure contains the stratum `id` (itself included),
    /// in ascending id order.
    pub fn incident_strata(&self, id: usize) -> Vec<usize> {
        let sig = &self.strata[id].signature;
        let mut choices: Vec<Vec<usize>> = Vec::with_capacity(self.dim);
        for a in 0..self.dim {
            let planes = &self.planes_by_axis[a];
            let mut zero_at = None;
            let mut below = 0usize;
            for (j, &k) in planes.iter().enumerate() {
                match sig[k] {
                    0 => zero_at = Some(j),
                    1 => below = j + 1,
                    _ => {}
                }
            }
            match zero_at {
                Some(j) => choices.push(vec![2 * j, 2 * j + 1, 2 * j + 2]),
                None => choices.push(vec![2 * below]),
            }
        }
        let mut out = Vec::new();
        let mut idx = vec![0usize; self.dim];
        loop {
            let flat: usize = (0..self.dim).map(|a| choices[a][idx[a]] * self.strides[a]).sum();
            out.push(self.region_to_id[flat]);
            let mut a = 0;
            loop {
                if a == self.dim {
                    out.sort_unstable();
                    return out;
                }
                idx[a] += 1;
                if idx[a] < choices[a].len() {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    }

    /// Strata whose closure contains `x`.
    pub fn strata_around(&self, x: &[T]) -> Vec<usize> {
        self.incident_strata(self.locate(x))
    }

    /// Plane index (into [`hyperplanes`](Self::hyperplanes)) on which the
    /// stratum lies along `axis`, if any.
    pub fn zero_plane_on_axis(&self, id: usize, axis: usize) -> Option<usize> {
        let sig = &self.strata[id].signature;
        self.planes_by_axis[axis].iter().copied().find(|&k| sig[k] == 0)
    }

    /// Tangent space of the stratum containing `x`.
    pub fn tangent_space(&self, id: usize, x: &[T]) -> Result<ConeDescriptor> {
        self.stratum(id)?;
        if self.locate(x) != id {
            return Err(Error::PointNotInClosure(id));
        }
        Ok(self.tangent_space_of(id))
    }

    /// Tangent space of a stratum, independent of the base point.
    pub fn tangent_space_of(&self, id: usize) -> ConeDescriptor {
        let constraints = (0..self.dim)
            .map(|a| {
                if self.zero_plane_on_axis(id, a).is_some() {
                    AxisConstraint::Zero
                } else {
                    AxisConstraint::Free
                }
            })
            .collect();
        ConeDescriptor { constraints }
    }

    /// Tangent cone of the closure of stratum `id` at a point `x` of that closure.
    pub fn closure_cone(&self, id: usize, x: &[T]) -> Result<ConeDescriptor> {
        self.stratum(id)?;
        let at = self.locate(x);
        if !self.is_face_of(at, id) {
            return Err(Error::PointNotInClosure(id));
        }
        Ok(self.closure_cone_at_face(id, at))
    }

    /// Tangent cone of `closure(id)` at any point of the face stratum `face`.
    pub fn closure_cone_at_face(&self, id: usize, face: usize) -> ConeDescriptor {
        let sig = &self.strata[id].signature;
        let fsig = &self.strata[face].signature;
        let constraints = (0..self.dim)
            .map(|a| {
                let mut c = AxisConstraint::Free;
                for &k in &self.planes_by_axis[a] {
                    if sig[k] == 0 {
                        c = AxisConstraint::Zero;
                        break;
                    }
                    if fsig[k] == 0 {
                        c = if sig[k] > 0 {
                            AxisConstraint::NonNegative
                        } else {
                            AxisConstraint::NonPositive
                        };
                    }
                }
                c
            })
            .collect();
        ConeDescriptor { constraints }
    }

    /// Euclidean projection onto the affine hull of the stratum.
    pub fn project_to_stratum(&self, id: usize, x: &[T]) -> Result<Vec<T>> {
        self.stratum(id)?;
        let mut y = x.to_vec();
        for (a, ya) in y.iter_mut().enumerate() {
            if let Some(k) = self.zero_plane_on_axis(id, a) {
                *ya = self.hyperplanes[k].offset;
            }
        }
        Ok(y)
    }

    pub fn distance_to_stratum(&self, id: usize, x: &[T]) -> Result<T> {
        let p = self.project_to_stratum(id, x)?;
        Ok(dist(x, &p))
    }

    /// Open interval (per axis) spanned by the stratum, `None` bounds for
    /// unbounded directions, degenerate `[o, o]` on constrained axes.
    pub fn axis_extent(&self, id: usize, axis: usize) -> (Option<T>, Option<T>) {
        let sig = &self.strata[id].signature;
        let planes = &self.planes_by_axis[axis];
        let mut lo = None;
        let mut hi = None;
        for &k in planes {
            let o = self.hyperplanes[k].offset;
            match sig[k] {
                0 => return (Some(o), Some(o)),
                1 => lo = Some(o),
                _ => {
                    if hi.is_none() {
                        hi = Some(o);
                    }
                }
            }
        }
        (lo, hi)
    }

    /// Uniform random point of the stratum inside the box `[lo, hi]^d`,
    /// `None` if the stratum misses the box.
    pub fn sample_point<R: Rng + ?Sized>(&self, id: usize, lo: T, hi: T, rng: &mut R) -> Option<Vec<T>> {
        let mut x = Vec::with_capacity(self.dim);
        for a in 0..self.dim {
            let (l, h) = self.axis_extent(id, a);
            if let (Some(a), Some(b)) = (l, h) {
                if a == b {
                    x.push(a);
                    continue;
                }
            }
            let l = l.map_or(lo, |v| v.max(lo));
            let h = h.map_or(hi, |v| v.min(hi));
            if !(l < h) {
                return None;
            }
            let u = T::lit(rng.gen_range(0.0..1.0));
            let mut v = l + (h - l) * u;
            // keep away from the bounding planes so the point stays in the open stratum
            let margin = (h - l) * T::lit(1e-6);
            v = v.max(l + margin).min(h - margin);
            x.push(v);
        }
        debug_assert_eq!(self.locate(&x), id);
        Some(x)
    }
}

fn signature_of_regions<T: Scalar>(
    hyperplanes: &[Hyperplane<T>],
    planes_by_axis: &[Vec<usize>],
    regions: &[usize],
) -> Vec<i8> {
    let mut sig = vec![0i8; hyperplanes.len()];
    for (a, planes) in planes_by_axis.iter().enumerate() {
        let r = regions[a];
        for (j, &k) in planes.iter().enumerate() {
            let on = 2 * j + 1;
            sig[k] = match r.cmp(&on) {
                std::cmp::Ordering::Equal => 0,
                std::cmp::Ordering::Less => -1,
                std::cmp::Ordering::Greater => 1,
            };
        }
    }
    sig
}

/// Checks that region `r` on one axis reproduces the signature entries of
/// that axis' planes.
fn signature_of_regions_axis(planes: &[usize], r: usize, sig: &[i8]) -> Option<()> {
    for (j, &k) in planes.iter().enumerate() {
        let on = 2 * j + 1;
        let expect = match r.cmp(&on) {
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Less => -1,
            std::cmp::Ordering::Greater => 1,
        };
        if sig[k] != expect {
            return None;
        }
    }
    Some(())
}

fn zero_axes<T: Scalar>(hyperplanes: &[Hyperplane<T>], sig: &[i8], dim: usize) -> usize {
    let mut seen = vec![false; dim];
    for (h, &s) in hyperplanes.iter().zip(sig) {
        if s == 0 {
            seen[h.axis] = true;
        }
    }
    seen.iter().filter(|&&b| b).count()
}
