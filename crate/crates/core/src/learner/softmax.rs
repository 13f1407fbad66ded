//! Ensembles of multinomial logistic-regression members.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

use super::augment::{AugmentConfig, AugmentDraw};
use super::features::{DensityCache, FeatureMatrix, FeatureRow, FeatureSource, Standardizer, FEATURE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub l2: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 50,
            batch: 256,
            l2: 1e-4,
        }
    }
}

const INIT_STD: f64 = 0.01;

/// One trained classifier: a `classes × FEATURE_COUNT` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub weights: Vec<f64>,
    pub classes: usize,
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: f64,
    /// Mean mini-batch loss of every epoch, measured before each step.
    pub loss_history: Vec<f64>,
}

impl Member {
    pub fn zeros(classes: usize) -> Self {
        Self {
            weights: vec![0.0; classes * FEATURE_COUNT],
            classes,
            seed: 0,
            epochs: 0,
            final_loss: f64::NAN,
            loss_history: Vec::new(),
        }
    }

    pub fn proba(&self, x: &FeatureRow) -> Vec<f64> {
        let mut out = vec![0.0; self.classes];
        softmax_into(&self.weights, self.classes, x, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<Member>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.members[0].classes
    }
}

/// Class probabilities per (member, point), stored member-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTensor {
    members: usize,
    points: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ProbabilityTensor {
    pub fn new(members: usize, points: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != members * points * classes || members == 0 || classes == 0 {
            return Err(Error::InvalidArgument(format!(
                "probability tensor shape {members}x{points}x{classes} does not match {} values",
                data.len()
            )));
        }
        Ok(Self {
            members,
            points,
            classes,
            data,
        })
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, member: usize, point: usize) -> &[f64] {
        let start = (member * self.points + point) * self.classes;
        &self.data[start..start + self.classes]
    }
}

fn logits_into(weights: &[f64], classes: usize, x: &FeatureRow, out: &mut [f64]) {
    for c in 0..classes {
        let w = &weights[c * FEATURE_COUNT..(c + 1) * FEATURE_COUNT];
        out[c] = w.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

fn softmax_into(weights: &[f64], classes: usize, x: &FeatureRow, out: &mut [f64]) {
    logits_into(weights, classes, x, out);
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in out.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
}

/// Weighted mean cross-entropy plus `l2/2 · ‖W‖²`, and its gradient.
pub fn loss_and_gradient(
    weights: &[f64],
    classes: usize,
    rows: &[FeatureRow],
    labels: &[usize],
    sample_weights: &[f64],
    l2: f64,
) -> (f64, Vec<f64>) {
    let all: Vec<usize> = (0..rows.len()).collect();
    batch_loss_and_gradient(weights, classes, rows, labels, sample_weights, l2, &all)
}

fn batch_loss_and_gradient(
    weights: &[f64],
    classes: usize,
    rows: &[FeatureRow],
    labels: &[usize],
    sample_weights: &[f64],
    l2: f64,
    batch: &[usize],
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; weights.len()];
    let mut p = vec![0.0; classes];
    let mut loss = 0.0;
    let mut total_w = 0.0;
    for &i in batch {
        let x = &rows[i];
        let w = sample_weights[i];
        logits_into(weights, classes, x, &mut p);
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + p.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += w * (lse - p[labels[i]]);
        total_w += w;
        for c in 0..classes {
            let g = w * ((p[c] - lse).exp() - if c == labels[i] { 1.0 } else { 0.0 });
            for f in 0..FEATURE_COUNT {
                grad[c * FEATURE_COUNT + f] += g * x[f];
            }
        }
    }
    let reg: f64 = weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    let scale = if total_w > 0.0 { 1.0 / total_w } else { 0.0 };
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g * scale + l2 * w;
    }
    (loss * scale + reg, grad)
}

/// Inverse class-frequency weights normalized so present classes share the
/// total mass equally.
pub fn class_balance_weights(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count().max(1);
    let n = labels.len() as f64;
    labels
        .iter()
        .map(|&l| n / (present as f64 * counts[l] as f64))
        .collect()
}

/// Labeled training rows plus what is needed to augment them per epoch.
pub struct TrainingSet<'a> {
    /// Point indices of the labeled points.
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    /// Standardized, unaugmented rows aligned with `indices`.
    pub rows: Vec<FeatureRow>,
    pub standardizer: Standardizer,
    pub augmentation: Option<Augmentation<'a>>,
}

pub struct Augmentation<'a> {
    pub source: &'a FeatureSource,
    pub config: AugmentConfig,
    pub cache: DensityCache,
}

impl<'a> TrainingSet<'a> {
    /// Training data without augmentation from a standardized matrix.
    pub fn from_matrix(features: &FeatureMatrix, known: &[bool], labels: &[i32]) -> Result<Self> {
        let indices: Vec<usize> = (0..features.len()).filter(|&i| known[i]).collect();
        if indices.is_empty() {
            return Err(Error::NoLabeledPoints);
        }
        Ok(Self {
            labels: indices.iter().map(|&i| labels[i] as usize).collect(),
            rows: indices.iter().map(|&i| features.rows[i]).collect(),
            indices,
            standardizer: features.standardizer.clone(),
            augmentation: None,
        })
    }

    fn epoch_rows(&self, seed: u64, epoch: usize) -> Option<Vec<FeatureRow>> {
        let aug = self.augmentation.as_ref().filter(|a| a.config.any())?;
        let draw = AugmentDraw::sample(&aug.config, aug.source.positions(), derive_seed(seed, 1_000 + epoch as u64));
        let raw = aug.source.augmented_rows(&draw, &self.indices, &aug.cache);
        Some(raw.iter().map(|r| self.standardizer.apply(r)).collect())
    }
}

/// Mini-batch SGD on the class-balanced cross-entropy. Initialization,
/// shuffling and augmentation draws all derive from `seed`.
pub fn train_member(train: &TrainingSet<'_>, classes: usize, hyper: &Hyper, seed: u64) -> Result<Member> {
    if train.indices.is_empty() {
        return Err(Error::NoLabeledPoints);
    }
    if hyper.batch == 0 || !(hyper.lr > 0.0) || !(hyper.l2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("bad hyperparameters {hyper:?}")));
    }
    if let Some(&bad) = train.labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange {
            label: bad as i64,
            class_count: classes,
        });
    }
    let mut rng = seeded(seed);
    let mut weights: Vec<f64> = (0..classes * FEATURE_COUNT)
        .map(|_| INIT_STD * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let sample_weights = class_balance_weights(&train.labels, classes);
    let full_loss = |w: &[f64]| {
        loss_and_gradient(w, classes, &train.rows, &train.labels, &sample_weights, hyper.l2).0
    };
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut order: Vec<usize> = (0..train.indices.len()).collect();
    for epoch in 0..hyper.epochs {
        let augmented = train.epoch_rows(seed, epoch);
        let rows = augmented.as_deref().unwrap_or(&train.rows);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(hyper.batch) {
            let (loss, grad) =
                batch_loss_and_gradient(&weights, classes, rows, &train.labels, &sample_weights, hyper.l2, batch);
            epoch_loss += loss * batch.len() as f64;
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= hyper.lr * g;
            }
        }
        history.push(epoch_loss / order.len() as f64);
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument("training diverged; lower the learning rate".into()));
    }
    let final_loss = full_loss(&weights);
    Ok(Member {
        weights,
        classes,
        seed,
        epochs: hyper.epochs,
        final_loss,
        loss_history: history,
    })
}

/// Trains `n_members` members with seeds `base_seed + m`.
pub fn train_ensemble(
    train: &TrainingSet<'_>,
    classes: usize,
    n_members: usize,
    hyper: &Hyper,
    base_seed: u64,
) -> Result<Ensemble> {
    if n_members == 0 {
        return Err(Error::InvalidArgument("ensemble needs at least one member".into()));
    }
    let members = (0..n_members)
        .into_par_iter()
        .map(|m| train_member(train, classes, hyper, base_seed.wrapping_add(m as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { members })
}

pub fn predict_proba(ensemble: &Ensemble, features: &FeatureMatrix) -> ProbabilityTensor {
    let classes = ensemble.classes();
    let n = features.len();
    let mut data = vec![0.0; ensemble.len() * n * classes];
    for (m, member) in ensemble.members.iter().enumerate() {
        data[m * n * classes..(m + 1) * n * classes]
            .par_chunks_mut(classes)
            .zip(features.rows.par_iter())
            .for_each(|(out, x)| softmax_into(&member.weights, classes, x, out));
    }
    ProbabilityTensor {
        members: ensemble.len(),
        points: n,
        classes,
        data,
    }
}
