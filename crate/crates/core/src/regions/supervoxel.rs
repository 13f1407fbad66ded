//! Ground plane + density clusters + k-means ground tiles.

use crate::cloud::PointCloud;
use crate::error::Result;
use crate::rng::derive_seed;
use crate::spatial::{squared_distance, SpatialIndex};

use super::{dbscan, fit_ground_plane, kmeans, Region, RegionKind, RegionSet, NOISE};

#[derive(Debug, Clone, PartialEq)]
pub struct SupervoxelParams {
    pub ransac_iters: usize,
    pub inlier_threshold: f64,
    pub eps: f64,
    pub min_pts: usize,
    /// Target area (m²) of one ground tile; sets K for the ground split.
    pub ground_region_target_area: f64,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for SupervoxelParams {
    fn default() -> Self {
        Self {
            ransac_iters: 200,
            inlier_threshold: 0.1,
            eps: 0.5,
            min_pts: 5,
            ground_region_target_area: 4.0,
            kmeans_iters: 50,
            seed: 0,
        }
    }
}

/// Number of ground tiles for a ground footprint of `area` m².
pub fn ground_tile_count(area: f64, target: f64, ground_points: usize) -> usize {
    let k = if target > 0.0 { (area / target).ceil() } else { 1.0 };
    (k.max(1.0) as usize).min(ground_points.max(1))
}

/// Separates the cloud into ground tiles and object clusters.
///
/// Non-ground DBSCAN noise joins the cluster with the nearest centroid, or
/// becomes singleton regions when no cluster exists. Region ids run over
/// ground tiles first, then object clusters, then singletons.
pub fn build_supervoxels(cloud: &PointCloud, params: &SupervoxelParams) -> Result<RegionSet> {
    let positions = cloud.positions();
    let (_, ground) = fit_ground_plane(
        positions,
        params.ransac_iters,
        params.inlier_threshold,
        derive_seed(params.seed, 1),
    )?;
    let mut is_ground = vec![false; cloud.len()];
    for &g in &ground {
        is_ground[g] = true;
    }
    let object: Vec<usize> = (0..cloud.len()).filter(|&i| !is_ground[i]).collect();

    let mut groups: Vec<(RegionKind, Vec<usize>)> = Vec::new();

    if !ground.is_empty() {
        let xy: Vec<[f64; 2]> = ground.iter().map(|&g| [positions[g][0], positions[g][1]]).collect();
        let (mut lo, mut hi) = (xy[0], xy[0]);
        for p in &xy {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let area = (hi[0] - lo[0]) * (hi[1] - lo[1]);
        let k = ground_tile_count(area, params.ground_region_target_area, xy.len());
        let km = kmeans(&xy, k, params.kmeans_iters, derive_seed(params.seed, 2))?;
        let mut tiles = vec![Vec::new(); k];
        for (&g, &a) in ground.iter().zip(&km.assignments) {
            tiles[a].push(g);
        }
        groups.extend(
            tiles
                .into_iter()
                .filter(|t| !t.is_empty())
                .map(|t| (RegionKind::SupervoxelGround, t)),
        );
    }

    if !object.is_empty() {
        let sub = SpatialIndex::new(object.iter().map(|&i| positions[i]).collect());
        let local: Vec<usize> = (0..object.len()).collect();
        let labels = dbscan(&sub, &local, params.eps, params.min_pts)?;
        let clusters = labels.iter().copied().max().unwrap_or(NOISE) + 1;
        let mut members = vec![Vec::new(); clusters as usize];
        let mut noise = Vec::new();
        for (k, &l) in labels.iter().enumerate() {
            if l == NOISE {
                noise.push(object[k]);
            } else {
                members[l as usize].push(object[k]);
            }
        }
        if members.is_empty() {
            groups.extend(noise.into_iter().map(|p| (RegionKind::SupervoxelObject, vec![p])));
        } else {
            let centroids: Vec<[f64; 3]> = members
                .iter()
                .map(|m| {
                    let mut c = [0.0; 3];
                    for &i in m {
                        for a in 0..3 {
                            c[a] += positions[i][a];
                        }
                    }
                    c.map(|v| v / m.len() as f64)
                })
                .collect();
            for p in noise {
                let nearest = centroids
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        squared_distance(&positions[p], a.1)
                            .total_cmp(&squared_distance(&positions[p], b.1))
                            .then(a.0.cmp(&b.0))
                    })
                    .map(|(c, _)| c)
                    .unwrap();
                members[nearest].push(p);
            }
            groups.extend(members.into_iter().map(|m| (RegionKind::SupervoxelObject, m)));
        }
    }

    let regions = groups
        .into_iter()
        .enumerate()
        .map(|(id, (kind, pts))| Region::new(cloud, id, kind, None, pts))
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionSet {
        regions,
        resolution: None,
    })
}
