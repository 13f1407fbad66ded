//! Handcrafted per-point features for the reference classifier.
//!
//! Columns: height above the ground plane, r/255, g/255, b/255, surface
//! variation, |normal z|, local density and a constant bias.

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::pca::principal_axes;
use crate::regions::PlaneModel;
use crate::spatial::SpatialIndex;

use super::augment::{AugmentDraw, SCALE_RANGE};

pub const FEATURE_COUNT: usize = 8;
pub const HEIGHT: usize = 0;
pub const RED: usize = 1;
pub const VARIATION: usize = 4;
pub const NORMAL_Z: usize = 5;
pub const DENSITY: usize = 6;
pub const BIAS: usize = 7;

pub const DENSITY_RADIUS: f64 = 0.5;
pub const DENSITY_SATURATION: usize = 50;

pub type FeatureRow = [f64; FEATURE_COUNT];

/// λ3 / (λ1 + λ2 + λ3) for eigenvalues sorted descending.
pub fn surface_variation(eigenvalues: [f64; 3]) -> f64 {
    let sum: f64 = eigenvalues.iter().sum();
    if sum < 1e-18 {
        0.0
    } else {
        eigenvalues[2] / sum
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalGeometry {
    pub variation: f64,
    pub normal: [f64; 3],
}

/// Covariance analysis of a neighborhood. When the spread has rank below
/// two the normal is undefined and falls back to +z with zero variation.
pub fn local_geometry(positions: &[[f64; 3]], neighbors: &[usize]) -> LocalGeometry {
    let degenerate = LocalGeometry {
        variation: 0.0,
        normal: [0.0, 0.0, 1.0],
    };
    let Some(pca) = principal_axes(neighbors.iter().map(|&j| &positions[j])) else {
        return degenerate;
    };
    let [l1, l2, _] = pca.eigenvalues;
    if l1 <= 0.0 || l2 <= 1e-12 * l1 {
        return degenerate;
    }
    LocalGeometry {
        variation: surface_variation(pca.eigenvalues),
        normal: pca.normal(),
    }
}

fn density(count: usize) -> f64 {
    (count as f64 / DENSITY_SATURATION as f64).min(1.0)
}

/// Unstandardized feature rows, one per point.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatures {
    pub rows: Vec<FeatureRow>,
}

/// Feature rows for the points `subset` of an arbitrary (possibly
/// augmented) cloud, with `index` built over `positions`.
pub fn feature_rows(
    positions: &[[f64; 3]],
    color_of: impl Fn(usize) -> [u8; 3] + Sync,
    index: &SpatialIndex,
    ground: &PlaneModel,
    k_neighbors: usize,
    subset: &[usize],
) -> Vec<FeatureRow> {
    subset
        .par_iter()
        .map(|&i| {
            let p = &positions[i];
            let nbrs = index.knn_point(p, k_neighbors);
            let geo = local_geometry(positions, &nbrs);
            let mut count = 0;
            index.for_each_within(p, DENSITY_RADIUS, |_, _| count += 1);
            let c = color_of(i);
            [
                ground.signed_distance(p),
                c[0] as f64 / 255.0,
                c[1] as f64 / 255.0,
                c[2] as f64 / 255.0,
                geo.variation,
                geo.normal[2].abs(),
                density(count),
                1.0,
            ]
        })
        .collect()
}

pub fn extract_features(
    cloud: &PointCloud,
    index: &SpatialIndex,
    ground: &PlaneModel,
    k_neighbors: usize,
) -> Result<RawFeatures> {
    if k_neighbors < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 neighbors, got {k_neighbors}")));
    }
    if index.len() != cloud.len() {
        return Err(Error::InvalidArgument("spatial index does not match the cloud".into()));
    }
    let all: Vec<usize> = (0..cloud.len()).collect();
    let colors = cloud.colors();
    Ok(RawFeatures {
        rows: feature_rows(cloud.positions(), |i| colors[i], index, ground, k_neighbors, &all),
    })
}

/// Per-point surface variation of the k-neighborhood.
pub fn surface_variations(positions: &[[f64; 3]], index: &SpatialIndex, k: usize) -> Vec<f64> {
    (0..positions.len())
        .into_par_iter()
        .map(|i| local_geometry(positions, &index.knn_point(&positions[i], k)).variation)
        .collect()
}

/// Per-column standardization fitted on a labeled subset. The bias column
/// passes through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: FeatureRow,
    pub std: FeatureRow,
}

pub const MIN_STD: f64 = 1e-12;

impl Standardizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a FeatureRow>) -> Result<Self> {
        let rows: Vec<&FeatureRow> = rows.into_iter().collect();
        if rows.is_empty() {
            return Err(Error::NoLabeledPoints);
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; FEATURE_COUNT];
        for r in &rows {
            for f in 0..FEATURE_COUNT {
                mean[f] += r[f];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; FEATURE_COUNT];
        for r in &rows {
            for f in 0..FEATURE_COUNT {
                var[f] += (r[f] - mean[f]).powi(2);
            }
        }
        let mut std = var.map(|v| (v / n).sqrt().max(MIN_STD));
        for f in 0..FEATURE_COUNT {
            if rows.iter().all(|r| r[f] == rows[0][f]) {
                mean[f] = rows[0][f];
                std[f] = 1.0;
            }
        }
        mean[BIAS] = 0.0;
        std[BIAS] = 1.0;
        Ok(Self { mean, std })
    }

    pub fn apply(&self, row: &FeatureRow) -> FeatureRow {
        std::array::from_fn(|f| (row[f] - self.mean[f]) / self.std[f])
    }
}

/// Standardized features with the parameters used to produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureRow>,
    pub standardizer: Standardizer,
}

impl FeatureMatrix {
    /// Standardizes all rows with statistics of the rows where `fit_on` is set.
    pub fn standardize(raw: &RawFeatures, fit_on: &[bool]) -> Result<Self> {
        let standardizer = Standardizer::fit(
            raw.rows
                .iter()
                .zip(fit_on)
                .filter(|(_, &m)| m)
                .map(|(r, _)| r),
        )?;
        Ok(Self::with(raw, standardizer))
    }

    pub fn with(raw: &RawFeatures, standardizer: Standardizer) -> Self {
        let rows = raw.rows.par_iter().map(|r| standardizer.apply(r)).collect();
        Self { rows, standardizer }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Everything needed to recompute features of training points under an
/// augmentation draw.
#[derive(Debug, Clone)]
pub struct FeatureSource {
    positions: Vec<[f64; 3]>,
    colors: Vec<[u8; 3]>,
    index: SpatialIndex,
    ground: PlaneModel,
    k_neighbors: usize,
    raw: RawFeatures,
}

/// Squared distances to the nearest neighbors within the largest radius a
/// scale augmentation can map onto the density radius.
#[derive(Debug, Clone)]
pub struct DensityCache {
    d2: Vec<Vec<f64>>,
}

impl FeatureSource {
    pub fn new(cloud: &PointCloud, ground: PlaneModel, k_neighbors: usize) -> Result<Self> {
        let index = SpatialIndex::from_cloud(cloud);
        let raw = extract_features(cloud, &index, &ground, k_neighbors)?;
        Ok(Self {
            positions: cloud.positions().to_vec(),
            colors: cloud.colors().to_vec(),
            index,
            ground,
            k_neighbors,
            raw,
        })
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn raw(&self) -> &RawFeatures {
        &self.raw
    }

    pub fn index(&self) -> &SpatialIndex {
        &self.index
    }

    pub fn ground(&self) -> &PlaneModel {
        &self.ground
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn density_cache(&self, subset: &[usize]) -> DensityCache {
        let reach = DENSITY_RADIUS / SCALE_RANGE.0;
        let d2 = subset
            .par_iter()
            .map(|&i| {
                let mut d = Vec::new();
                self.index.for_each_within(&self.positions[i], reach, |_, d2| d.push(d2));
                d.sort_by(f64::total_cmp);
                d.truncate(DENSITY_SATURATION);
                d
            })
            .collect();
        DensityCache { d2 }
    }

    /// Raw feature rows of `subset` after applying `draw` to the cloud.
    ///
    /// Without elastic distortion the augmented cloud is a similarity image
    /// of the original: neighborhoods, surface variation and |normal z| are
    /// unchanged, height scales with the draw, and density is recounted from
    /// cached distances. Elastic draws re-extract from transformed positions.
    pub fn augmented_rows(&self, draw: &AugmentDraw, subset: &[usize], cache: &DensityCache) -> Vec<FeatureRow> {
        if draw.has_elastic() {
            let moved: Vec<[f64; 3]> = self.positions.par_iter().map(|p| draw.position(p)).collect();
            let plane = draw.similarity.apply_plane(&self.ground);
            let index = SpatialIndex::new(moved);
            return feature_rows(
                index.positions(),
                |i| draw.color(i, self.colors[i]),
                &index,
                &plane,
                self.k_neighbors,
                subset,
            );
        }
        let s = draw.similarity.scale;
        let limit = DENSITY_RADIUS * DENSITY_RADIUS / (s * s);
        subset
            .iter()
            .zip(&cache.d2)
            .map(|(&i, d2)| {
                let mut row = self.raw.rows[i];
                row[HEIGHT] *= s;
                let c = draw.color(i, self.colors[i]);
                for ch in 0..3 {
                    row[RED + ch] = c[ch] as f64 / 255.0;
                }
                row[DENSITY] = density(d2.partition_point(|&d| d <= limit));
                row
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::augment::AugmentConfig;
    use rand::{Rng, SeedableRng};

    #[test]
    fn surface_variation_examples() {
        assert_eq!(surface_variation([1.0, 1.0, 0.0]), 0.0);
        assert!((surface_variation([1.0, 1.0, 1.0]) - 1.0 / 3.0).abs() < 1e-15);
        assert!((surface_variation([4.0, 2.0, 1.0]) - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(surface_variation([0.0, 0.0, 0.0]), 0.0);
    }

    fn scene(n: usize, seed: u64) -> PointCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut pos = Vec::new();
        for _ in 0..n {
            pos.push([rng.random_range(0.0..6.0), rng.random_range(0.0..6.0), 0.0]);
        }
        for _ in 0..n / 2 {
            pos.push([rng.random_range(2.0..3.0), rng.random_range(2.0..3.0), rng.random_range(0.5..2.0)]);
        }
        let m = pos.len();
        let colors = (0..m).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let labels = (0..m).map(|i| (i >= n) as i32).collect();
        PointCloud::new(pos, colors, labels, 2).unwrap()
    }

    #[test]
    fn ground_points_are_planar_with_zero_height() {
        let c = scene(400, 1);
        let index = SpatialIndex::from_cloud(&c);
        let raw = extract_features(&c, &index, &PlaneModel::horizontal(0.1), 8).unwrap();
        // far from the box, neighborhoods are coplanar
        for (i, p) in c.positions().iter().enumerate().take(400) {
            if p[0] < 1.5 || p[0] > 4.5 {
                assert_eq!(raw.rows[i][HEIGHT], 0.0);
                assert!(raw.rows[i][VARIATION].abs() < 1e-12);
                assert!((raw.rows[i][NORMAL_Z] - 1.0).abs() < 1e-9);
            }
            assert!(raw.rows[i].iter().all(|v| v.is_finite()));
            assert_eq!(raw.rows[i][BIAS], 1.0);
        }
        assert!(extract_features(&c, &index, &PlaneModel::horizontal(0.1), 2).is_err());
    }

    #[test]
    fn uniform_color_gives_constant_columns() {
        let c0 = scene(100, 2);
        let n = c0.len();
        let c = PointCloud::new(c0.positions().to_vec(), vec![[10, 20, 30]; n], c0.gt_labels().to_vec(), 2).unwrap();
        let raw = extract_features(&c, &SpatialIndex::from_cloud(&c), &PlaneModel::horizontal(0.1), 5).unwrap();
        for r in &raw.rows {
            assert_eq!([r[1], r[2], r[3]], [10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0]);
        }
        let fm = FeatureMatrix::standardize(&raw, &vec![true; n]).unwrap();
        assert!(fm.rows.iter().all(|r| r.iter().all(|v| v.is_finite())));
        assert!(fm.rows.iter().all(|r| r[1] == 0.0 && r[BIAS] == 1.0));
    }

    #[test]
    fn collinear_neighborhood_falls_back() {
        let pos: Vec<[f64; 3]> = (0..6).map(|i| [i as f64, 0.0, 0.0]).collect();
        let g = local_geometry(&pos, &[0, 1, 2, 3]);
        assert_eq!(g, LocalGeometry { variation: 0.0, normal: [0.0, 0.0, 1.0] });
        let g = local_geometry(&pos, &[2, 2, 2]);
        assert_eq!(g.variation, 0.0);
    }

    #[test]
    fn standardizer_requires_labels() {
        let raw = RawFeatures { rows: vec![[0.0; FEATURE_COUNT]; 3] };
        assert!(matches!(FeatureMatrix::standardize(&raw, &[false; 3]), Err(Error::NoLabeledPoints)));
    }

    #[test]
    fn similarity_shortcut_matches_reextraction() {
        let c = scene(600, 3);
        let src = FeatureSource::new(&c, PlaneModel { normal: [0.0, 0.0, 1.0], offset: -0.2, inlier_threshold: 0.1 }, 10).unwrap();
        let subset: Vec<usize> = (0..c.len()).step_by(7).collect();
        let cache = src.density_cache(&subset);
        let cfg = AugmentConfig::default();
        for seed in 0..5 {
            let draw = AugmentDraw::sample(&cfg, c.positions(), seed);
            let fast = src.augmented_rows(&draw, &subset, &cache);
            // reference: transform every point and extract from scratch
            let moved: Vec<[f64; 3]> = c.positions().iter().map(|p| draw.position(p)).collect();
            let index = SpatialIndex::new(moved.clone());
            let plane = draw.similarity.apply_plane(src.ground());
            let slow = feature_rows(&moved, |i| draw.color(i, c.colors()[i]), &index, &plane, 10, &subset);
            for (a, b) in fast.iter().zip(&slow) {
                for f in 0..FEATURE_COUNT {
                    assert!((a[f] - b[f]).abs() < 1e-7, "feature {f}: {} vs {}", a[f], b[f]);
                }
            }
        }
    }
}
