//! Point-wise classifiers used inside the active-learning loop.

pub mod augment;
pub mod features;
pub mod softmax;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::regions::{fit_ground_plane, PlaneModel};

pub use augment::AugmentConfig;
pub use features::{FeatureMatrix, FeatureSource, Standardizer};
pub use softmax::{Ensemble, Hyper, ProbabilityTensor};

use softmax::{predict_proba, train_ensemble, Augmentation, TrainingSet};

/// A model family the loop can retrain from scratch every cycle.
pub trait Learner: Sync {
    /// Per-cloud data computed once and reused across cycles.
    type Prepared: Sync + Send;
    type Model: Send;

    fn prepare(&self, cloud: &PointCloud) -> Result<Self::Prepared>;

    /// Trains on the points of `cloud` whose labels are known.
    fn fit(&self, prepared: &Self::Prepared, cloud: &PointCloud, seed: u64) -> Result<Self::Model>;

    fn predict(&self, model: &Self::Model, prepared: &Self::Prepared) -> ProbabilityTensor;

    /// Per-point feature vectors the model sees, for diversity clustering.
    fn embed(&self, model: &Self::Model, prepared: &Self::Prepared) -> Vec<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxEnsembleLearner {
    pub members: usize,
    pub hyper: Hyper,
    pub augment: AugmentConfig,
    pub k_neighbors: usize,
    pub ransac_iters: usize,
    pub inlier_threshold: f64,
    pub ground_seed: u64,
}

impl Default for SoftmaxEnsembleLearner {
    fn default() -> Self {
        Self {
            members: 4,
            hyper: Hyper::default(),
            augment: AugmentConfig::default(),
            k_neighbors: 16,
            ransac_iters: 200,
            inlier_threshold: 0.1,
            ground_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SoftmaxModel {
    pub ensemble: Ensemble,
    pub standardizer: Standardizer,
}

impl SoftmaxEnsembleLearner {
    fn ground_plane(&self, cloud: &PointCloud) -> Result<PlaneModel> {
        match fit_ground_plane(cloud.positions(), self.ransac_iters, self.inlier_threshold, self.ground_seed) {
            Ok((plane, _)) => Ok(plane),
            Err(Error::Degenerate(_)) => {
                let low = cloud.positions().iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
                Ok(PlaneModel {
                    offset: low,
                    ..PlaneModel::horizontal(self.inlier_threshold)
                })
            }
            Err(e) => Err(e),
        }
    }
}

impl Learner for SoftmaxEnsembleLearner {
    type Prepared = FeatureSource;
    type Model = SoftmaxModel;

    fn prepare(&self, cloud: &PointCloud) -> Result<FeatureSource> {
        FeatureSource::new(cloud, self.ground_plane(cloud)?, self.k_neighbors)
    }

    fn fit(&self, prepared: &FeatureSource, cloud: &PointCloud, seed: u64) -> Result<SoftmaxModel> {
        if prepared.len() != cloud.len() {
            return Err(Error::InvalidArgument(format!(
                "features prepared for {} points, cloud has {}",
                prepared.len(),
                cloud.len()
            )));
        }
        let known: Vec<bool> = (0..cloud.len()).map(|i| cloud.known_mask()[i] && cloud.has_label(i)).collect();
        let features = FeatureMatrix::standardize(prepared.raw(), &known)?;
        let mut train = TrainingSet::from_matrix(&features, &known, cloud.gt_labels())?;
        if self.augment.any() {
            train.augmentation = Some(Augmentation {
                source: prepared,
                config: self.augment,
                cache: prepared.density_cache(&train.indices),
            });
        }
        let ensemble = train_ensemble(&train, cloud.class_count(), self.members, &self.hyper, seed)?;
        Ok(SoftmaxModel {
            ensemble,
            standardizer: features.standardizer,
        })
    }

    fn predict(&self, model: &SoftmaxModel, prepared: &FeatureSource) -> ProbabilityTensor {
        let features = FeatureMatrix::with(prepared.raw(), model.standardizer.clone());
        predict_proba(&model.ensemble, &features)
    }

    fn embed(&self, model: &SoftmaxModel, prepared: &FeatureSource) -> Vec<Vec<f64>> {
        prepared
            .raw()
            .rows
            .iter()
            .map(|r| model.standardizer.apply(r).to_vec())
            .collect()
    }
}

/// Index of the largest probability, lowest class on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = c;
        }
    }
    best
}

/// Hard labels from the ensemble-mean probabilities.
pub fn predict_labels(proba: &ProbabilityTensor) -> Vec<i32> {
    let mut mean = vec![0.0; proba.classes()];
    (0..proba.points())
        .map(|i| {
            mean.iter_mut().for_each(|v| *v = 0.0);
            for m in 0..proba.members() {
                for (acc, p) in mean.iter_mut().zip(proba.row(m, i)) {
                    *acc += p;
                }
            }
            argmax(&mean) as i32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn two_class_scene() -> PointCloud {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut pos = Vec::new();
        let mut col = Vec::new();
        let mut lab = Vec::new();
        for _ in 0..600 {
            pos.push([rng.random_range(0.0..10.0), rng.random_range(0.0..10.0), rng.random_range(-0.02..0.02)]);
            col.push([90, 90, 90]);
            lab.push(0);
        }
        for _ in 0..300 {
            pos.push([rng.random_range(4.0..6.0), rng.random_range(4.0..6.0), rng.random_range(1.0..4.0)]);
            col.push([30, 160, 40]);
            lab.push(1);
        }
        PointCloud::new(pos, col, lab, 2).unwrap()
    }

    #[test]
    fn learns_a_separable_scene() {
        let mut cloud = two_class_scene();
        for i in (0..cloud.len()).step_by(10) {
            cloud.reveal(i).unwrap();
        }
        let learner = SoftmaxEnsembleLearner {
            hyper: Hyper { epochs: 20, ..Hyper::default() },
            ..Default::default()
        };
        let prepared = learner.prepare(&cloud).unwrap();
        let model = learner.fit(&prepared, &cloud, 1).unwrap();
        let pred = predict_labels(&learner.predict(&model, &prepared));
        let correct = pred.iter().zip(cloud.gt_labels()).filter(|(p, g)| **p == **g).count();
        assert!(correct as f64 / cloud.len() as f64 > 0.95);
        assert_eq!(learner.embed(&model, &prepared).len(), cloud.len());
    }

    #[test]
    fn fit_is_deterministic() {
        let mut cloud = two_class_scene();
        for i in (0..cloud.len()).step_by(7) {
            cloud.reveal(i).unwrap();
        }
        let learner = SoftmaxEnsembleLearner {
            hyper: Hyper { epochs: 5, ..Hyper::default() },
            ..Default::default()
        };
        let prepared = learner.prepare(&cloud).unwrap();
        let a = learner.fit(&prepared, &cloud, 4).unwrap();
        let b = learner.fit(&prepared, &cloud, 4).unwrap();
        assert_eq!(a.ensemble, b.ensemble);
        assert_eq!(learner.predict(&a, &prepared), learner.predict(&b, &prepared));
    }

    #[test]
    fn fit_without_labels_fails() {
        let cloud = two_class_scene();
        let learner = SoftmaxEnsembleLearner::default();
        let prepared = learner.prepare(&cloud).unwrap();
        assert!(matches!(learner.fit(&prepared, &cloud, 0), Err(Error::NoLabeledPoints)));
    }

    #[test]
    fn argmax_prefers_lowest_on_ties() {
        assert_eq!(argmax(&[0.3, 0.3, 0.3]), 0);
        assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
    }
}
