//! The active-learning loop: seed, train, score, select, reveal, repeat.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::learner::features::surface_variations;
use crate::learner::{predict_labels, Learner, ProbabilityTensor, SoftmaxEnsembleLearner};
use crate::metrics::{budget_report, confusion, miou, region_area};
use crate::regions::{assign_columns, build_supervoxels, Region, RegionSet, SupervoxelParams};
use crate::rng::derive_seed;
use crate::selection::{
    color_discontinuity, ensemble_mean_proba, ent_point, ent_scores, random_policy, redal_score, region_scores,
    select_regions, var_scores, AcquisitionScore, Policy, RedalInputs, RedalParams, SelectionBudget,
};
use crate::spatial::SpatialIndex;

const SEED_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const DIVERSITY_STREAM: u64 = 3;
const RANDOM_STREAM: u64 = 4;

/// Neighbors used for the color-discontinuity term of the hybrid score.
pub const COLOR_NEIGHBORS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum Separation {
    Columns { r: f64 },
    Supervoxels(SupervoxelParams),
}

impl Separation {
    pub fn name(&self) -> &'static str {
        match self {
            Separation::Columns { .. } => "columns",
            Separation::Supervoxels(_) => "supervoxels",
        }
    }

    pub fn build(&self, cloud: &PointCloud) -> Result<RegionSet> {
        match self {
            Separation::Columns { r } => assign_columns(cloud, *r),
            Separation::Supervoxels(p) => build_supervoxels(cloud, p),
        }
    }

    fn describe(&self) -> String {
        match self {
            Separation::Columns { r } => format!("columns(r={r})"),
            Separation::Supervoxels(p) => format!(
                "supervoxels(ransac_iters={},inlier_threshold={},eps={},min_pts={},ground_area={},kmeans_iters={},seed={})",
                p.ransac_iters, p.inlier_threshold, p.eps, p.min_pts, p.ground_region_target_area, p.kmeans_iters, p.seed
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub separation: Separation,
    pub policy: Policy,
    pub redal: RedalParams,
    pub budget: SelectionBudget,
    pub initial_budget: SelectionBudget,
    pub cycles: usize,
    pub learner: SoftmaxEnsembleLearner,
    pub seed: u64,
    /// Classes left out of the mIoU.
    pub ignore: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            separation: Separation::Columns { r: 0.5 },
            policy: Policy::AvgEnt,
            redal: RedalParams::default(),
            budget: SelectionBudget::PointFraction(0.01),
            initial_budget: SelectionBudget::PointFraction(0.01),
            cycles: 10,
            learner: SoftmaxEnsembleLearner::default(),
            seed: 0,
            ignore: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 {
            return Err(Error::InvalidArgument("cycles must be at least 1".into()));
        }
        self.budget.validate()?;
        self.initial_budget.validate()?;
        if self.policy == Policy::Redal {
            self.redal.validate()?;
        }
        if let Separation::Columns { r } = self.separation {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidArgument(format!("column edge must be positive, got {r}")));
            }
        }
        if self.learner.members == 0 {
            return Err(Error::InvalidArgument("ensemble needs at least one member".into()));
        }
        Ok(())
    }

    /// One-line description of every setting that affects the results.
    pub fn fingerprint(&self) -> String {
        let l = &self.learner;
        let mut s = format!(
            "policy={} separation={} budget={:?} initial_budget={:?} cycles={} seed={} ensemble={} lr={} epochs={} batch={} l2={} augment={} k_neighbors={}",
            self.policy,
            self.separation.describe(),
            self.budget,
            self.initial_budget,
            self.cycles,
            self.seed,
            l.members,
            l.hyper.lr,
            l.hyper.epochs,
            l.hyper.batch,
            l.hyper.l2,
            l.augment,
            l.k_neighbors,
        );
        if self.policy == Policy::Redal {
            let r = &self.redal;
            let _ = write!(
                s,
                " alpha={} beta={} gamma={} k_div={} decay={} single_member={}",
                r.alpha, r.beta, r.gamma, r.clusters, r.decay, r.single_member
            );
        }
        if !self.ignore.is_empty() {
            let _ = write!(s, " ignore={:?}", self.ignore);
        }
        s
    }
}

/// Tracks which regions have been handed to the annotator.
#[derive(Debug, Clone)]
pub struct Oracle {
    consumed: Vec<bool>,
}

impl Oracle {
    pub fn new(regions: &RegionSet) -> Self {
        Self {
            consumed: vec![false; regions.len()],
        }
    }

    pub fn is_consumed(&self, region_id: usize) -> bool {
        self.consumed.get(region_id).copied().unwrap_or(false)
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.consumed.len()).filter(|&i| !self.consumed[i]).collect()
    }

    /// Reveals the ground truth of every annotated point in `region`.
    pub fn reveal(&mut self, cloud: &mut PointCloud, region: &Region) -> Result<usize> {
        match self.consumed.get(region.id) {
            None => return Err(Error::InvalidArgument(format!("unknown region id {}", region.id))),
            Some(true) => return Err(Error::AlreadyLabeled(region.id)),
            Some(false) => {}
        }
        let mut revealed = 0;
        for &p in &region.points {
            revealed += cloud.reveal(p)? as usize;
        }
        self.consumed[region.id] = true;
        Ok(revealed)
    }
}

/// Labels a random initial set of regions within `initial_budget`.
pub fn seed_labels(
    cloud: &mut PointCloud,
    regions: &RegionSet,
    oracle: &mut Oracle,
    initial_budget: &SelectionBudget,
    seed: u64,
) -> Result<Vec<usize>> {
    if regions.is_empty() {
        return Err(Error::Empty("region set".into()));
    }
    let candidates = oracle.unlabeled();
    let picked = random_policy(&candidates, regions, initial_budget, cloud, seed)?;
    for &id in &picked {
        oracle.reveal(cloud, &regions.regions[id])?;
    }
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub cycle: usize,
    pub labeled_points: usize,
    pub labeled_fraction: f64,
    pub labeled_area_m2: f64,
    pub miou: f64,
    pub per_class: Vec<Option<f64>>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentLog {
    pub fingerprint: String,
    pub class_count: usize,
    pub rows: Vec<LogRow>,
    pub notes: Vec<String>,
    /// Region ids labeled in each cycle, cycle 0 being the seed set.
    pub selections: Vec<Vec<usize>>,
}

impl ExperimentLog {
    pub fn header(&self, with_wall: bool) -> String {
        let mut h = String::from("cycle,labeled_points,labeled_fraction,labeled_area_m2,miou");
        for c in 0..self.class_count {
            let _ = write!(h, ",iou_c{c}");
        }
        if with_wall {
            h.push_str(",wall_seconds");
        }
        h
    }

    fn render(&self, with_wall: bool) -> String {
        let mut out = format!("# {}\n{}\n", self.fingerprint, self.header(with_wall));
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{}",
                r.cycle, r.labeled_points, r.labeled_fraction, r.labeled_area_m2, r.miou
            );
            for v in &r.per_class {
                match v {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push(','),
                }
            }
            if with_wall {
                let _ = write!(out, ",{:.3}", r.wall_seconds);
            }
            out.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(out, "# note: {n}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        self.render(true)
    }

    /// The CSV without the timing column.
    pub fn body_without_wall(&self) -> String {
        self.render(false)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Labeled fraction of the first row whose mIoU reaches `threshold`.
    pub fn fraction_reaching(&self, threshold: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.miou >= threshold).map(|r| r.labeled_fraction)
    }
}

/// A cloud together with the learner's per-cloud preparation.
pub struct Dataset<'a, P> {
    pub cloud: &'a PointCloud,
    pub prepared: &'a P,
}

impl<P> Clone for Dataset<'_, P> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<P> Copy for Dataset<'_, P> {}

/// Per-point terms of the hybrid score that do not depend on the model.
struct Geometry {
    color: Vec<f64>,
    variation: Vec<f64>,
}

impl Geometry {
    fn compute(cloud: &PointCloud, k: usize) -> Result<Self> {
        let index = SpatialIndex::from_cloud(cloud);
        Ok(Self {
            color: color_discontinuity(cloud, &index, COLOR_NEIGHBORS)?,
            variation: surface_variations(cloud.positions(), &index, k.max(3)),
        })
    }
}

fn evaluate<L: Learner>(
    learner: &L,
    model: &L::Model,
    train: Dataset<'_, L::Prepared>,
    eval: Option<Dataset<'_, L::Prepared>>,
    ignore: &[usize],
) -> Result<(f64, Vec<Option<f64>>)> {
    let target = eval.unwrap_or(train);
    let pred = predict_labels(&learner.predict(model, target.prepared));
    let cm = confusion(&pred, target.cloud.gt_labels(), target.cloud.class_count(), ignore)?;
    miou(&cm)
}

fn score_candidates<L: Learner>(
    config: &ExperimentConfig,
    learner: &L,
    model: &L::Model,
    train: Dataset<'_, L::Prepared>,
    candidates: &[&Region],
    geometry: &mut Option<Geometry>,
    cycle: usize,
) -> Result<Vec<AcquisitionScore>> {
    let proba: ProbabilityTensor = learner.predict(model, train.prepared);
    match config.policy {
        Policy::AvgVar => region_scores(candidates, &var_scores(&proba), Policy::AvgVar, cycle),
        Policy::AvgEnt => region_scores(candidates, &ent_scores(&ensemble_mean_proba(&proba)), Policy::AvgEnt, cycle),
        Policy::Redal => {
            if geometry.is_none() {
                *geometry = Some(Geometry::compute(train.cloud, config.learner.k_neighbors)?);
            }
            let geo = geometry.as_ref().unwrap();
            let entropy = if config.redal.single_member {
                (0..proba.points()).map(|i| ent_point(proba.row(0, i))).collect()
            } else {
                ent_scores(&ensemble_mean_proba(&proba))
            };
            let embedding = learner.embed(model, train.prepared);
            let features: Vec<Vec<f64>> = candidates
                .iter()
                .map(|r| {
                    let dim = embedding.first().map_or(0, |e| e.len());
                    let mut mean = vec![0.0; dim];
                    for &p in &r.points {
                        for (m, v) in mean.iter_mut().zip(&embedding[p]) {
                            *m += v;
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= r.points.len() as f64);
                    mean
                })
                .collect();
            let params = RedalParams {
                clusters: config.redal.clusters.min(candidates.len()),
                ..config.redal
            };
            let inputs = RedalInputs {
                entropy: &entropy,
                color_discontinuity: &geo.color,
                surface_variation: &geo.variation,
                region_features: &features,
            };
            redal_score(
                candidates,
                &inputs,
                &params,
                derive_seed(derive_seed(config.seed, DIVERSITY_STREAM), cycle as u64),
                cycle,
            )
        }
        Policy::Random => unreachable!("random selection does not score regions"),
    }
}

/// Runs the loop with a caller-supplied learner and precomputed regions.
pub fn run_with<L: Learner>(
    config: &ExperimentConfig,
    learner: &L,
    train: Dataset<'_, L::Prepared>,
    regions: &RegionSet,
    eval: Option<Dataset<'_, L::Prepared>>,
) -> Result<ExperimentLog> {
    config.validate()?;
    if train.cloud.labeled_count() == 0 {
        return Err(Error::InvalidCloud("training cloud has no ground-truth labels".into()));
    }
    let mut cloud = train.cloud.clone();
    cloud.clear_known();
    let train = Dataset {
        cloud: train.cloud,
        prepared: train.prepared,
    };
    let train_seed = derive_seed(config.seed, TRAIN_STREAM);
    let mut oracle = Oracle::new(regions);
    let mut labeled: Vec<usize> = Vec::new();
    let mut points = 0usize;
    let mut area = 0.0;
    let mut geometry = None;
    let mut log = ExperimentLog {
        fingerprint: format!(
            "{} eval={}",
            config.fingerprint(),
            if eval.is_some() { "held_out" } else { "train" }
        ),
        class_count: cloud.class_count(),
        rows: Vec::new(),
        notes: Vec::new(),
        selections: Vec::new(),
    };

    let record = |cloud: &PointCloud, picked: &[usize], labeled: &mut Vec<usize>, points: &mut usize, area: &mut f64| -> Result<()> {
        for &id in picked {
            let region = &regions.regions[id];
            *points += region.points.iter().filter(|&&p| cloud.has_label(p)).count();
            *area += region_area(cloud, region)?;
            labeled.push(id);
        }
        Ok(())
    };

    let start = Instant::now();
    let seeded_ids = seed_labels(
        &mut cloud,
        regions,
        &mut oracle,
        &config.initial_budget,
        derive_seed(config.seed, SEED_STREAM),
    )?;
    record(&cloud, &seeded_ids, &mut labeled, &mut points, &mut area)?;
    log.selections.push(seeded_ids);

    let mut model = learner.fit(train.prepared, &cloud, train_seed)?;
    let push_row = |log: &mut ExperimentLog,
                    cycle: usize,
                    model: &L::Model,
                    cloud: &PointCloud,
                    labeled: &[usize],
                    points: usize,
                    area: f64,
                    started: Instant|
     -> Result<()> {
        let report = budget_report(cloud, labeled.iter().map(|&id| &regions.regions[id]))?;
        if report.labeled_points != points || report.labeled_area_m2 != area {
            return Err(Error::InvalidArgument(format!(
                "budget accounting drifted at cycle {cycle}: {points} points / {area} m² tracked, {} / {} recomputed",
                report.labeled_points, report.labeled_area_m2
            )));
        }
        let (m, per_class) = evaluate(learner, model, train, eval, &config.ignore)?;
        log.rows.push(LogRow {
            cycle,
            labeled_points: report.labeled_points,
            labeled_fraction: report.labeled_fraction,
            labeled_area_m2: report.labeled_area_m2,
            miou: m,
            per_class,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        Ok(())
    };
    push_row(&mut log, 0, &model, &cloud, &labeled, points, area, start)?;

    for cycle in 1..=config.cycles {
        let started = Instant::now();
        let unlabeled = oracle.unlabeled();
        if unlabeled.is_empty() {
            let mut row = log.rows.last().unwrap().clone();
            row.cycle = cycle;
            row.wall_seconds = started.elapsed().as_secs_f64();
            log.rows.push(row);
            log.selections.push(Vec::new());
            if !log.notes.iter().any(|n| n.contains("exhausted")) {
                log.notes.push(format!(
                    "unlabeled regions exhausted before cycle {cycle}; later rows repeat the final state"
                ));
            }
            continue;
        }
        let picked = if config.policy == Policy::Random {
            random_policy(
                &unlabeled,
                regions,
                &config.budget,
                &cloud,
                derive_seed(derive_seed(config.seed, RANDOM_STREAM), cycle as u64),
            )?
        } else {
            let candidates: Vec<&Region> = unlabeled.iter().map(|&id| &regions.regions[id]).collect();
            let scores = score_candidates(config, learner, &model, train, &candidates, &mut geometry, cycle)?;
            select_regions(&scores, regions, &config.budget, &cloud)?
        };
        for &id in &picked {
            oracle.reveal(&mut cloud, &regions.regions[id])?;
        }
        record(&cloud, &picked, &mut labeled, &mut points, &mut area)?;
        log.selections.push(picked);
        model = learner.fit(train.prepared, &cloud, train_seed)?;
        push_row(&mut log, cycle, &model, &cloud, &labeled, points, area, started)?;
    }
    Ok(log)
}

/// Trains on every ground-truth label and returns the evaluation mIoU.
pub fn supervised_with<L: Learner>(
    config: &ExperimentConfig,
    learner: &L,
    train: Dataset<'_, L::Prepared>,
    eval: Option<Dataset<'_, L::Prepared>>,
) -> Result<f64> {
    let mut cloud = train.cloud.clone();
    cloud.clear_known();
    for i in 0..cloud.len() {
        cloud.reveal(i)?;
    }
    let model = learner.fit(train.prepared, &cloud, derive_seed(config.seed, TRAIN_STREAM))?;
    Ok(evaluate(learner, &model, train, eval, &config.ignore)?.0)
}

/// Runs one experiment end to end with the configured ensemble learner.
pub fn run_experiment(config: &ExperimentConfig, train: &PointCloud, eval: Option<&PointCloud>) -> Result<ExperimentLog> {
    let learner = &config.learner;
    let train_prep = learner.prepare(train)?;
    let eval_prep = eval.map(|c| learner.prepare(c)).transpose()?;
    let regions = config.separation.build(train)?;
    run_with(
        config,
        learner,
        Dataset { cloud: train, prepared: &train_prep },
        &regions,
        eval.zip(eval_prep.as_ref()).map(|(cloud, prepared)| Dataset { cloud, prepared }),
    )
}

pub fn supervised_baseline(config: &ExperimentConfig, train: &PointCloud, eval: Option<&PointCloud>) -> Result<f64> {
    let learner = &config.learner;
    let train_prep = learner.prepare(train)?;
    let eval_prep = eval.map(|c| learner.prepare(c)).transpose()?;
    supervised_with(
        config,
        learner,
        Dataset { cloud: train, prepared: &train_prep },
        eval.zip(eval_prep.as_ref()).map(|(cloud, prepared)| Dataset { cloud, prepared }),
    )
}
