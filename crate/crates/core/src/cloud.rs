//! Point-cloud data model.

use crate::error::{Error, Result};

/// Label value for points without ground truth.
pub const NO_LABEL: i32 = -1;

/// Columnar labeled point cloud.
///
/// Positions are meters, colors 8-bit RGB. `known_mask` is runtime state of
/// the active-learning loop and is never persisted.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<[f64; 3]>,
    colors: Vec<[u8; 3]>,
    gt_labels: Vec<i32>,
    known_mask: Vec<bool>,
    class_count: usize,
}

impl PointCloud {
    pub fn new(
        positions: Vec<[f64; 3]>,
        colors: Vec<[u8; 3]>,
        gt_labels: Vec<i32>,
        class_count: usize,
    ) -> Result<Self> {
        let n = positions.len();
        if n == 0 {
            return Err(Error::InvalidCloud("cloud must contain at least one point".into()));
        }
        if colors.len() != n || gt_labels.len() != n {
            return Err(Error::InvalidCloud(format!(
                "column lengths differ: {} positions, {} colors, {} labels",
                n,
                colors.len(),
                gt_labels.len()
            )));
        }
        if class_count < 2 {
            return Err(Error::InvalidCloud(format!(
                "class count must be at least 2, got {class_count}"
            )));
        }
        if let Some(p) = positions.iter().find(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidCloud(format!("non-finite coordinate {p:?}")));
        }
        if let Some(&l) = gt_labels
            .iter()
            .find(|&&l| l != NO_LABEL && (l < 0 || l as usize >= class_count))
        {
            return Err(Error::LabelOutOfRange {
                label: l as i64,
                class_count,
            });
        }
        Ok(Self {
            positions,
            colors,
            gt_labels,
            known_mask: vec![false; n],
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    pub fn gt_labels(&self) -> &[i32] {
        &self.gt_labels
    }

    pub fn known_mask(&self) -> &[bool] {
        &self.known_mask
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn has_label(&self, i: usize) -> bool {
        self.gt_labels[i] != NO_LABEL
    }

    /// Number of points carrying a ground-truth label.
    pub fn labeled_count(&self) -> usize {
        self.gt_labels.iter().filter(|&&l| l != NO_LABEL).count()
    }

    /// Marks the label of point `i` as known. Points without ground truth
    /// stay unknown; returns whether the point was newly revealed.
    pub fn reveal(&mut self, i: usize) -> Result<bool> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        if self.gt_labels[i] == NO_LABEL || self.known_mask[i] {
            return Ok(false);
        }
        self.known_mask[i] = true;
        Ok(true)
    }

    pub fn clear_known(&mut self) {
        self.known_mask.iter_mut().for_each(|k| *k = false);
    }

    /// Overwrites ground truth with [`NO_LABEL`] where `mask` is true.
    pub fn drop_labels(&mut self, mask: &[bool]) {
        for (i, &m) in mask.iter().enumerate() {
            if m {
                self.gt_labels[i] = NO_LABEL;
                self.known_mask[i] = false;
            }
        }
    }

    /// Bounding box of every point.
    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(self.positions.iter().copied()).expect("cloud is non-empty")
    }
}

/// Axis-aligned bounding box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn point(p: [f64; 3]) -> Self {
        Self { min: p, max: p }
    }

    pub fn from_points(points: impl IntoIterator<Item = [f64; 3]>) -> Option<Self> {
        let mut it = points.into_iter();
        let mut bb = Aabb::point(it.next()?);
        for p in it {
            bb.grow(p);
        }
        Some(bb)
    }

    pub fn grow(&mut self, p: [f64; 3]) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    /// Δx·Δy + Δx·Δz + Δy·Δz, half the cuboid surface.
    pub fn half_surface(&self) -> f64 {
        let [dx, dy, dz] = self.extent();
        dx * dy + dx * dz + dy * dz
    }
}

/// Exact component-wise extrema of the selected positions.
pub fn bounding_box(cloud: &PointCloud, indices: &[usize]) -> Result<Aabb> {
    if indices.is_empty() {
        return Err(Error::Empty("bounding box of an empty index list".into()));
    }
    let n = cloud.len();
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    Ok(Aabb::from_points(indices.iter().map(|&i| cloud.positions[i])).expect("non-empty"))
}
