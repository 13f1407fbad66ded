//! Partitioning a cloud into annotatable regions.
//!
//! Two separation methods are provided: fixed-resolution grid columns on the
//! XY plane, and supervoxels built from a ground plane, density clusters of
//! the remaining points and a k-means split of the ground.

mod dbscan;
mod ground;
mod kmeans;
mod supervoxel;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

pub use dbscan::{dbscan, NOISE};
pub use ground::{fit_ground_plane, PlaneModel};
pub use kmeans::{kmeans, KMeansResult};
pub use supervoxel::{build_supervoxels, SupervoxelParams};

use crate::cloud::{bounding_box, Aabb, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionKind {
    Column,
    SupervoxelGround,
    SupervoxelObject,
}

impl fmt::Display for RegionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionKind::Column => "column",
            RegionKind::SupervoxelGround => "supervoxel_ground",
            RegionKind::SupervoxelObject => "supervoxel_object",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub id: usize,
    pub kind: RegionKind,
    pub column: Option<(i64, i64)>,
    /// Sorted, duplicate-free point indices.
    pub points: Vec<usize>,
    pub bbox: Aabb,
}

impl Region {
    pub fn new(
        cloud: &PointCloud,
        id: usize,
        kind: RegionKind,
        column: Option<(i64, i64)>,
        mut points: Vec<usize>,
    ) -> Result<Self> {
        points.sort_unstable();
        points.dedup();
        let bbox = bounding_box(cloud, &points)?;
        Ok(Self {
            id,
            kind,
            column,
            points,
            bbox,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    pub regions: Vec<Region>,
    /// Column edge length, for column separations.
    pub resolution: Option<f64>,
}

impl RegionSet {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Region> {
        self.regions.get(id).filter(|r| r.id == id)
    }

    /// Region id of every point.
    pub fn point_owner(&self, n: usize) -> Result<Vec<usize>> {
        let mut owner = vec![usize::MAX; n];
        for r in &self.regions {
            for &p in &r.points {
                if p >= n {
                    return Err(Error::IndexOutOfRange { index: p, len: n });
                }
                if owner[p] != usize::MAX {
                    return Err(Error::OverlappingRegions(p));
                }
                owner[p] = r.id;
            }
        }
        if let Some(p) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::InvalidArgument(format!("point {p} belongs to no region")));
        }
        Ok(owner)
    }

    /// Checks disjointness, full coverage of `0..n`, ids, ordering and boxes.
    pub fn validate(&self, cloud: &PointCloud) -> Result<()> {
        for (k, r) in self.regions.iter().enumerate() {
            if r.id != k {
                return Err(Error::InvalidArgument(format!("region at position {k} has id {}", r.id)));
            }
            if r.points.is_empty() {
                return Err(Error::Empty(format!("region {k} has no points")));
            }
            if r.points.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(format!("region {k} points not strictly ascending")));
            }
            if bounding_box(cloud, &r.points)? != r.bbox {
                return Err(Error::InvalidArgument(format!("region {k} has a stale bounding box")));
            }
        }
        self.point_owner(cloud.len()).map(|_| ())
    }

    /// One line per region: `id kind i j n_points x0 y0 z0 x1 y1 z1`.
    pub fn write_dump<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for r in &self.regions {
            let (i, j) = match r.column {
                Some((i, j)) => (i.to_string(), j.to_string()),
                None => ("-".to_string(), "-".to_string()),
            };
            let (lo, hi) = (r.bbox.min, r.bbox.max);
            writeln!(
                w,
                "{} {} {} {} {} {} {} {} {} {} {}",
                r.id,
                r.kind,
                i,
                j,
                r.len(),
                lo[0],
                lo[1],
                lo[2],
                hi[0],
                hi[1],
                hi[2]
            )?;
        }
        Ok(())
    }
}

/// Grid cell of a coordinate pair for edge length `r`, origin at (0, 0).
pub fn column_of(x: f64, y: f64, r: f64) -> (i64, i64) {
    ((x / r).floor() as i64, (y / r).floor() as i64)
}

/// Splits the cloud into XY grid columns of edge `r`. Only occupied cells
/// become regions; ids follow ascending `(i, j)`.
pub fn assign_columns(cloud: &PointCloud, r: f64) -> Result<RegionSet> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("column edge must be positive, got {r}")));
    }
    let mut cells: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.positions().iter().enumerate() {
        cells.entry(column_of(p[0], p[1], r)).or_default().push(i);
    }
    let regions = cells
        .into_iter()
        .enumerate()
        .map(|(id, (cell, points))| Region::new(cloud, id, RegionKind::Column, Some(cell), points))
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionSet {
        regions,
        resolution: Some(r),
    })
}
