//! Segmentation quality and annotation-effort accounting.

use crate::cloud::{bounding_box, PointCloud, NO_LABEL};
use crate::error::{Error, Result};
use crate::regions::Region;

/// Counts indexed by (ground truth, prediction).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    class_count: usize,
    counts: Vec<u64>,
    ignore: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(class_count: usize, ignore: &[usize]) -> Self {
        let mut ignore = ignore.to_vec();
        ignore.sort_unstable();
        ignore.dedup();
        Self {
            class_count,
            counts: vec![0; class_count * class_count],
            ignore,
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.class_count + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_ignored(&self, class: usize) -> bool {
        self.ignore.binary_search(&class).is_ok()
    }

    fn add(&mut self, gt: usize, pred: usize) {
        self.counts[gt * self.class_count + pred] += 1;
    }
}

/// Tallies predictions over points whose ground truth exists and is not
/// ignored.
pub fn confusion(pred: &[i32], gt: &[i32], class_count: usize, ignore: &[usize]) -> Result<ConfusionMatrix> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            gt.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(class_count, ignore);
    for (&p, &g) in pred.iter().zip(gt) {
        if g == NO_LABEL {
            continue;
        }
        if g < 0 || g as usize >= class_count {
            return Err(Error::LabelOutOfRange {
                label: g as i64,
                class_count,
            });
        }
        if p < 0 || p as usize >= class_count {
            return Err(Error::LabelOutOfRange {
                label: p as i64,
                class_count,
            });
        }
        if cm.is_ignored(g as usize) {
            continue;
        }
        cm.add(g as usize, p as usize);
    }
    Ok(cm)
}

/// Mean IoU and the per-class IoU (`None` for ignored classes and classes
/// absent from both ground truth and prediction).
pub fn miou(cm: &ConfusionMatrix) -> Result<(f64, Vec<Option<f64>>)> {
    let c = cm.class_count();
    let mut per_class = vec![None; c];
    for k in 0..c {
        if cm.is_ignored(k) {
            continue;
        }
        let tp = cm.get(k, k);
        let row: u64 = (0..c).map(|p| cm.get(k, p)).sum();
        let col: u64 = (0..c).map(|g| cm.get(g, k)).sum();
        let union = row + col - tp;
        if union > 0 {
            per_class[k] = Some(tp as f64 / union as f64);
        }
    }
    let scored: Vec<f64> = per_class.iter().flatten().copied().collect();
    if scored.is_empty() {
        return Err(Error::Empty("confusion matrix has no supported class".into()));
    }
    Ok((scored.iter().sum::<f64>() / scored.len() as f64, per_class))
}

/// The label-efficiency target: 90 % of the fully supervised mIoU.
pub fn miou_at_90(full_supervised_miou: f64) -> f64 {
    0.9 * full_supervised_miou
}

/// Half the surface of the axis-aligned cuboid around the region's points.
pub fn region_area(cloud: &PointCloud, region: &Region) -> Result<f64> {
    Ok(bounding_box(cloud, &region.points)?.half_surface())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetReport {
    /// Labeled points that carry ground truth.
    pub labeled_points: usize,
    /// `labeled_points` over all points that carry ground truth.
    pub labeled_fraction: f64,
    pub labeled_area_m2: f64,
}

/// Effort spent on a set of disjoint labeled regions.
pub fn budget_report<'a>(cloud: &PointCloud, labeled: impl IntoIterator<Item = &'a Region>) -> Result<BudgetReport> {
    let mut seen = vec![false; cloud.len()];
    let mut points = 0usize;
    let mut area = 0.0;
    for region in labeled {
        for &p in &region.points {
            if p >= cloud.len() {
                return Err(Error::IndexOutOfRange { index: p, len: cloud.len() });
            }
            if seen[p] {
                return Err(Error::OverlappingRegions(p));
            }
            seen[p] = true;
            if cloud.has_label(p) {
                points += 1;
            }
        }
        area += region_area(cloud, region)?;
    }
    let denom = cloud.labeled_count();
    Ok(BudgetReport {
        labeled_points: points,
        labeled_fraction: if denom == 0 { 0.0 } else { points as f64 / denom as f64 },
        labeled_area_m2: area,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::RegionKind;
    use rand::{Rng, SeedableRng};

    fn cloud_of(points: Vec<[f64; 3]>, labels: Vec<i32>) -> PointCloud {
        let n = points.len();
        PointCloud::new(points, vec![[0; 3]; n], labels, 3).unwrap()
    }

    fn region(cloud: &PointCloud, id: usize, pts: Vec<usize>) -> Region {
        Region::new(cloud, id, RegionKind::Column, None, pts).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[0, 1, 2, 1], &[0, 1, 2, 1], 3, &[]).unwrap();
        for g in 0..3 {
            for p in 0..3 {
                assert_eq!(cm.get(g, p) > 0, g == p);
            }
        }
        let empty = confusion(&[0, 1], &[-1, -1], 3, &[]).unwrap();
        assert_eq!(empty.total(), 0);
        // hand tally: (gt,pred) = (0,0) (0,1) (1,1) (2,0)
        let cm = confusion(&[0, 1, 1, 0], &[0, 0, 1, 2], 3, &[]).unwrap();
        let want = [[1, 1, 0], [0, 1, 0], [1, 0, 0]];
        for g in 0..3 {
            for p in 0..3 {
                assert_eq!(cm.get(g, p), want[g][p]);
            }
        }
        assert!(confusion(&[3], &[0], 3, &[]).is_err());
        assert!(confusion(&[0], &[0, 1], 3, &[]).is_err());
    }

    #[test]
    fn miou_examples() {
        let cm = confusion(&[0, 1, 2], &[0, 1, 2], 3, &[]).unwrap();
        assert_eq!(miou(&cm).unwrap().0, 1.0);

        let cm = confusion(&[0, 1, 0, 1], &[0, 0, 1, 1], 2, &[]).unwrap();
        let (m, per) = miou(&cm).unwrap();
        assert!((m - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(per, vec![Some(1.0 / 3.0), Some(1.0 / 3.0)]);

        // class 2 absent from both
        let cm = confusion(&[0, 1], &[0, 1], 3, &[]).unwrap();
        let (m, per) = miou(&cm).unwrap();
        assert_eq!(m, 1.0);
        assert_eq!(per[2], None);

        let empty = confusion(&[0], &[-1], 3, &[]).unwrap();
        assert!(miou(&empty).is_err());
    }

    #[test]
    fn ignored_class_is_excluded() {
        // class 2 would score 0 if it counted
        let cm = confusion(&[0, 1, 0], &[0, 1, 2], 3, &[2]).unwrap();
        let (m, per) = miou(&cm).unwrap();
        assert_eq!(m, 1.0);
        assert_eq!(per[2], None);
    }

    #[test]
    fn miou_at_90_examples() {
        assert_eq!(miou_at_90(1.0), 0.9);
        assert_eq!(miou_at_90(0.0), 0.0);
        assert!((miou_at_90(0.613) - 0.5517).abs() < 1e-12);
    }

    #[test]
    fn area_examples() {
        let c = cloud_of(
            vec![[0.0; 3], [1.0, 1.0, 1.0], [5.0, 5.0, 5.0], [7.0, 8.0, 6.0], [2.0, 2.0, 2.0]],
            vec![0, 1, 2, -1, 0],
        );
        assert_eq!(region_area(&c, &region(&c, 0, vec![2])).unwrap(), 0.0);
        assert_eq!(region_area(&c, &region(&c, 0, vec![0, 1])).unwrap(), 3.0);
        // extents (2, 3, 1)
        assert_eq!(region_area(&c, &region(&c, 0, vec![2, 3])).unwrap(), 11.0);
    }

    #[test]
    fn budget_examples() {
        let c = cloud_of(
            vec![[0.0; 3], [1.0, 1.0, 1.0], [5.0, 5.0, 5.0], [7.0, 8.0, 6.0], [2.0, 2.0, 2.0]],
            vec![0, 1, 2, -1, 0],
        );
        let none: Vec<Region> = vec![];
        assert_eq!(
            budget_report(&c, &none).unwrap(),
            BudgetReport { labeled_points: 0, labeled_fraction: 0.0, labeled_area_m2: 0.0 }
        );
        let a = region(&c, 0, vec![0, 1]);
        let b = region(&c, 1, vec![2, 3]);
        let rest = region(&c, 2, vec![4]);
        let r = budget_report(&c, [&a, &b]).unwrap();
        assert_eq!(r.labeled_area_m2, 14.0);
        assert_eq!(r.labeled_points, 3);
        assert_eq!(r.labeled_fraction, 3.0 / 4.0);
        assert_eq!(budget_report(&c, [&a, &b, &rest]).unwrap().labeled_fraction, 1.0);
        let overlap = region(&c, 3, vec![1, 4]);
        assert!(budget_report(&c, [&a, &overlap]).is_err());
    }

    #[test]
    fn area_is_monotone_and_translation_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let pts: Vec<[f64; 3]> = (0..30).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
            let shift = [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), 3.0];
            let moved: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]).collect();
            let c = cloud_of(pts, vec![0; 30]);
            let m = cloud_of(moved, vec![0; 30]);
            let mut prev = 0.0;
            for k in 1..=30 {
                let idx: Vec<usize> = (0..k).collect();
                let a = region_area(&c, &region(&c, 0, idx.clone())).unwrap();
                assert!(a >= prev);
                prev = a;
                let b = region_area(&m, &region(&m, 0, idx)).unwrap();
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn random_prediction_miou_band() {
        // balanced classes, uniform random predictions: IoU_c -> 1/(2C-1)
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for c in [2usize, 4, 6] {
            let n = 200_000;
            let gt: Vec<i32> = (0..n).map(|i| (i % c) as i32).collect();
            let pred: Vec<i32> = (0..n).map(|_| rng.random_range(0..c as i32)).collect();
            let (m, _) = miou(&confusion(&pred, &gt, c, &[]).unwrap()).unwrap();
            assert!((m - 1.0 / (2 * c - 1) as f64).abs() < 0.05, "C={c}: {m}");
        }
    }
}
