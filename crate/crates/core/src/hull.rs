//! Small convex-hull helpers for velocity sets in one and two dimensions.

use crate::error::{Error, Result};
use crate::scalar::{total_cmp, Scalar};

/// Vertices of the 2-d convex hull in counter-clockwise order (monotone chain).
/// Collinear points are dropped.
pub(crate) fn convex_hull_2d<T: Scalar>(points: &[[T; 2]]) -> Vec<[T; 2]> {
    let mut pts: Vec<[T; 2]> = points.to_vec();
    pts.sort_by(|a, b| total_cmp(&a[0], &b[0]).then(total_cmp(&a[1], &b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: &[T; 2], a: &[T; 2], b: &[T; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut lower: Vec<[T; 2]> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= T::zero() {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<[T; 2]> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= T::zero() {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Signed distance from the origin to the boundary of the hull of `points`
/// (positive inside). Degenerate hulls have no interior and give 0 or less.
pub(crate) fn inscribed_radius<T: Scalar>(points: &[Vec<T>], dim: usize) -> Result<T> {
    if points.is_empty() {
        return Ok(T::neg_infinity());
    }
    match dim {
        1 => {
            let lo = points.iter().map(|p| p[0]).fold(T::infinity(), T::min);
            let hi = points.iter().map(|p| p[0]).fold(T::neg_infinity(), T::max);
            Ok((-lo).min(hi))
        }
        2 => {
            let pts: Vec<[T; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
            let hull = convex_hull_2d(&pts);
            if hull.len() < 3 {
                return Ok(T::zero());
            }
            let mut r = T::infinity();
            for i in 0..hull.len() {
                let a = hull[i];
                let b = hull[(i + 1) % hull.len()];
                let ex = b[0] - a[0];
                let ey = b[1] - a[1];
                let len = (ex * ex + ey * ey).sqrt();
                // ccw order: interior on the left, origin distance = cross(b - a, 0 - a) / |b - a|
                let d = (ex * (-a[1]) - ey * (-a[0])) / len;
                r = r.min(d);
            }
            Ok(r)
        }
        _ => Err(Error::InvalidArgument(format!(
            "hull radius only implemented for dimension 1 and 2, got {dim}"
        ))),
    }
}

/// Distance from `q` to the convex hull of `points` (0 inside).
pub(crate) fn distance_to_hull<T: Scalar>(points: &[Vec<T>], q: &[T], dim: usize) -> Result<T> {
    match dim {
        1 => {
            let lo = points.iter().map(|p| p[0]).fold(T::infinity(), T::min);
            let hi = points.iter().map(|p| p[0]).fold(T::neg_infinity(), T::max);
            Ok((lo - q[0]).max(q[0] - hi).max(T::zero()))
        }
        2 => {
            let pts: Vec<[T; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
            let hull = convex_hull_2d(&pts);
            let seg_dist = |a: [T; 2], b: [T; 2]| {
                let ex = b[0] - a[0];
                let ey = b[1] - a[1];
                let l2 = ex * ex + ey * ey;
                let t = if l2 > T::zero() {
                    (((q[0] - a[0]) * ex + (q[1] - a[1]) * ey) / l2).max(T::zero()).min(T::one())
                } else {
                    T::zero()
                };
                let px = a[0] + t * ex - q[0];
                let py = a[1] + t * ey - q[1];
                (px * px + py * py).sqrt()
            };
            match hull.len() {
                0 => Ok(T::infinity()),
                1 => Ok(seg_dist(hull[0], hull[0])),
                2 => Ok(seg_dist(hull[0], hull[1])),
                n => {
                    let mut inside = true;
                    let mut best = T::infinity();
                    for i in 0..n {
                        let a = hull[i];
                        let b = hull[(i + 1) % n];
                        let c = (b[0] - a[0]) * (q[1] - a[1]) - (b[1] - a[1]) * (q[0] - a[0]);
                        if c < T::zero() {
                            inside = false;
                        }
                        best = best.min(seg_dist(a, b));
                    }
                    Ok(if inside { T::zero() } else { best })
                }
            }
        }
        _ => Err(Error::InvalidArgument(format!(
            "hull distance only implemented for dimension 1 and 2, got {dim}"
        ))),
    }
}
