//! RANSAC ground-plane segmentation.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::pca::principal_axes;
use crate::rng::seeded;

/// Plane `normal · p = offset` with a unit normal pointing up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneModel {
    pub normal: [f64; 3],
    pub offset: f64,
    pub inlier_threshold: f64,
}

impl PlaneModel {
    fn from_normal_point(normal: [f64; 3], point: [f64; 3], inlier_threshold: f64) -> Self {
        let normal = orient(normalize(normal));
        Self {
            normal,
            offset: dot(normal, point),
            inlier_threshold,
        }
    }

    pub fn signed_distance(&self, p: &[f64; 3]) -> f64 {
        dot(self.normal, *p) - self.offset
    }

    pub fn is_inlier(&self, p: &[f64; 3]) -> bool {
        self.signed_distance(p).abs() <= self.inlier_threshold
    }

    /// Horizontal plane through the origin.
    pub fn horizontal(inlier_threshold: f64) -> Self {
        Self {
            normal: [0.0, 0.0, 1.0],
            offset: 0.0,
            inlier_threshold,
        }
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let l = norm(a);
    [a[0] / l, a[1] / l, a[2] / l]
}

/// Positive z, or for vertical planes the first non-zero component positive.
fn orient(n: [f64; 3]) -> [f64; 3] {
    let lead = if n[2] != 0.0 {
        n[2]
    } else if n[0] != 0.0 {
        n[0]
    } else {
        n[1]
    };
    if lead < 0.0 {
        [-n[0], -n[1], -n[2]]
    } else {
        n
    }
}

/// Plane normal through three points, `None` when they are (nearly) collinear.
fn triangle_normal(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Option<[f64; 3]> {
    let (u, v) = (sub(b, a), sub(c, a));
    let n = cross(u, v);
    let scale = norm(u) * norm(v);
    if scale == 0.0 || norm(n) <= 1e-12 * scale {
        None
    } else {
        Some(n)
    }
}

fn inliers_of(positions: &[[f64; 3]], plane: &PlaneModel) -> Vec<usize> {
    positions
        .iter()
        .enumerate()
        .filter(|(_, p)| plane.is_inlier(p))
        .map(|(i, _)| i)
        .collect()
}

/// Best plane by inlier count over `iterations` random 3-point samples,
/// followed by a least-squares refit on the winning inliers which is kept
/// only if it does not lose inliers. Returns the plane and its inliers in
/// ascending order.
pub fn fit_ground_plane(
    positions: &[[f64; 3]],
    iterations: usize,
    inlier_threshold: f64,
    seed: u64,
) -> Result<(PlaneModel, Vec<usize>)> {
    let n = positions.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("plane fitting needs 3 points, got {n}")));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("RANSAC needs at least one iteration".into()));
    }
    if !(inlier_threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!("bad inlier threshold {inlier_threshold}")));
    }
    let spread = principal_axes(positions.iter()).expect("non-empty");
    let [l1, l2, _] = spread.eigenvalues;
    if l1 == 0.0 || l2 <= 1e-12 * l1 {
        return Err(Error::Degenerate("points are collinear; no unique plane".into()));
    }

    let mut rng = seeded(seed);
    let mut best: Option<(PlaneModel, usize)> = None;
    for _ in 0..iterations {
        let s = sample(&mut rng, n, 3);
        let (a, b, c) = (positions[s.index(0)], positions[s.index(1)], positions[s.index(2)]);
        let Some(normal) = triangle_normal(a, b, c) else {
            continue;
        };
        let plane = PlaneModel::from_normal_point(normal, a, inlier_threshold);
        let count = positions.iter().filter(|p| plane.is_inlier(p)).count();
        if best.as_ref().is_none_or(|(_, c)| count > *c) {
            best = Some((plane, count));
        }
    }
    let plane = match best {
        Some((plane, _)) => plane,
        None => fallback_plane(positions, inlier_threshold)?,
    };
    let inliers = inliers_of(positions, &plane);

    if let Some(fit) = principal_axes(inliers.iter().map(|&i| &positions[i])) {
        let [a1, a2, _] = fit.eigenvalues;
        if a1 > 0.0 && a2 > 1e-12 * a1 {
            let refined = PlaneModel::from_normal_point(fit.normal(), fit.centroid, inlier_threshold);
            let refined_inliers = inliers_of(positions, &refined);
            if refined_inliers.len() >= inliers.len() {
                return Ok((refined, refined_inliers));
            }
        }
    }
    Ok((plane, inliers))
}

/// Deterministic well-conditioned triangle: first point, the point farthest
/// from it, and the point farthest from their line.
fn fallback_plane(positions: &[[f64; 3]], threshold: f64) -> Result<PlaneModel> {
    let a = positions[0];
    let far = |score: &dyn Fn(&[f64; 3]) -> f64| {
        positions
            .iter()
            .copied()
            .max_by(|p, q| score(p).total_cmp(&score(q)))
            .unwrap()
    };
    let b = far(&|p| norm(sub(*p, a)));
    let dir = normalize(sub(b, a));
    let c = far(&|p| norm(cross(sub(*p, a), dir)));
    let normal = triangle_normal(a, b, c)
        .ok_or_else(|| Error::Degenerate("no non-collinear point triple".into()))?;
    Ok(PlaneModel::from_normal_point(normal, a, threshold))
}
