//! Principal axes of small 3D point sets.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

/// Eigen-decomposition of a neighborhood covariance, eigenvalues sorted
/// descending and clamped to be non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Principal {
    pub centroid: [f64; 3],
    pub eigenvalues: [f64; 3],
    /// Unit eigenvectors matching `eigenvalues`.
    pub axes: [[f64; 3]; 3],
}

impl Principal {
    /// Direction of least variance.
    pub fn normal(&self) -> [f64; 3] {
        self.axes[2]
    }
}

pub fn principal_axes<'a>(points: impl IntoIterator<Item = &'a [f64; 3]> + Clone) -> Option<Principal> {
    let mut count = 0usize;
    let mut sum = Vector3::zeros();
    for p in points.clone() {
        sum += Vector3::from(*p);
        count += 1;
    }
    if count == 0 {
        return None;
    }
    let centroid = sum / count as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = Vector3::from(*p) - centroid;
        cov += d * d.transpose();
    }
    cov /= count as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut eigenvalues = [0.0; 3];
    let mut axes = [[0.0; 3]; 3];
    for (k, &o) in order.iter().enumerate() {
        eigenvalues[k] = eig.eigenvalues[o].max(0.0);
        let v = eig.eigenvectors.column(o);
        axes[k] = [v[0], v[1], v[2]];
    }
    Some(Principal {
        centroid: [centroid.x, centroid.y, centroid.z],
        eigenvalues,
        axes,
    })
}
