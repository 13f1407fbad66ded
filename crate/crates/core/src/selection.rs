//! Acquisition scores and budgeted region selection.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::learner::{argmax, ProbabilityTensor};
use crate::metrics::region_area;
use crate::regions::{kmeans, Region, RegionSet};
use crate::rng::seeded;
use crate::spatial::SpatialIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Random,
    AvgVar,
    AvgEnt,
    Redal,
}

impl Policy {
    pub const ALL: [Policy; 4] = [Policy::Random, Policy::AvgVar, Policy::AvgEnt, Policy::Redal];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Random => "random",
            Policy::AvgVar => "avg_var",
            Policy::AvgEnt => "avg_ent",
            Policy::Redal => "redal",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown policy '{s}' (random, avg_var, avg_ent, redal)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionScore {
    pub region_id: usize,
    pub score: f64,
    pub policy: Policy,
    pub cycle: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionBudget {
    /// Fraction of all points in the cloud.
    PointFraction(f64),
    AreaM2(f64),
    RegionCount(usize),
}

impl SelectionBudget {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SelectionBudget::PointFraction(f) => f > 0.0 && f.is_finite(),
            SelectionBudget::AreaM2(a) => a > 0.0 && a.is_finite(),
            SelectionBudget::RegionCount(k) => k > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("budget must be positive, got {self:?}")))
        }
    }
}

/// Per-point class distribution averaged over ensemble members.
pub fn ensemble_mean_proba(tensor: &ProbabilityTensor) -> Vec<Vec<f64>> {
    let n = tensor.members() as f64;
    (0..tensor.points())
        .into_par_iter()
        .map(|i| {
            let mut mean = vec![0.0; tensor.classes()];
            for m in 0..tensor.members() {
                for (acc, p) in mean.iter_mut().zip(tensor.row(m, i)) {
                    *acc += p;
                }
            }
            mean.iter_mut().for_each(|v| *v /= n);
            mean
        })
        .collect()
}

/// Variation ratio `1 − f_m/N` where `f_m` is the size of the largest vote.
pub fn var_point(tensor: &ProbabilityTensor, point: usize) -> f64 {
    let mut votes = vec![0usize; tensor.classes()];
    for m in 0..tensor.members() {
        votes[argmax(tensor.row(m, point))] += 1;
    }
    let modal = votes.into_iter().max().unwrap_or(0);
    1.0 - modal as f64 / tensor.members() as f64
}

pub fn var_scores(tensor: &ProbabilityTensor) -> Vec<f64> {
    (0..tensor.points()).into_par_iter().map(|i| var_point(tensor, i)).collect()
}

/// Natural-log entropy with `0 · ln 0 = 0`.
pub fn ent_point(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum();
    h.max(0.0)
}

pub fn ent_scores(mean: &[Vec<f64>]) -> Vec<f64> {
    mean.par_iter().map(|p| ent_point(p)).collect()
}

pub fn region_mean(point_scores: &[f64], region: &Region) -> Result<f64> {
    if region.points.is_empty() {
        return Err(Error::Empty(format!("region {}", region.id)));
    }
    let sum: f64 = region.points.iter().map(|&p| point_scores[p]).sum();
    Ok(sum / region.points.len() as f64)
}

/// Mean RGB distance (channels in [0, 1]) to the `k` nearest other points.
pub fn color_discontinuity(cloud: &PointCloud, index: &SpatialIndex, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("color discontinuity needs k >= 2, got {k}")));
    }
    let colors = cloud.colors();
    let out = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let neighbors: Vec<usize> = index
                .knn_point(&cloud.positions()[i], k + 1)
                .into_iter()
                .filter(|&j| j != i)
                .take(k)
                .collect();
            if neighbors.is_empty() {
                return 0.0;
            }
            let total: f64 = neighbors
                .iter()
                .map(|&j| {
                    (0..3)
                        .map(|c| ((colors[i][c] as f64 - colors[j][c] as f64) / 255.0).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum();
            total / neighbors.len() as f64
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedalParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub clusters: usize,
    pub decay: f64,
    /// Take softmax entropy from the first member instead of the mean.
    pub single_member: bool,
}

impl Default for RedalParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.5,
            gamma: 0.5,
            clusters: 10,
            decay: 0.95,
            single_member: false,
        }
    }
}

impl RedalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.gamma >= 0.0) {
            return Err(Error::InvalidArgument("redal weights must be non-negative".into()));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidArgument(format!("redal decay must be in (0, 1], got {}", self.decay)));
        }
        if self.clusters == 0 {
            return Err(Error::InvalidArgument("redal needs at least one cluster".into()));
        }
        Ok(())
    }
}

/// Per-point inputs of the hybrid score.
pub struct RedalInputs<'a> {
    pub entropy: &'a [f64],
    pub color_discontinuity: &'a [f64],
    pub surface_variation: &'a [f64],
    /// Mean feature vector of each scored region, aligned with `regions`.
    pub region_features: &'a [Vec<f64>],
}

/// Weighted region information score, lowered by `decay^rank` within each
/// diversity cluster.
pub fn redal_score(
    regions: &[&Region],
    inputs: &RedalInputs<'_>,
    params: &RedalParams,
    seed: u64,
    cycle: usize,
) -> Result<Vec<AcquisitionScore>> {
    params.validate()?;
    if params.clusters > regions.len() {
        return Err(Error::InvalidArgument(format!(
            "{} diversity clusters for {} regions",
            params.clusters,
            regions.len()
        )));
    }
    if inputs.region_features.len() != regions.len() {
        return Err(Error::InvalidArgument("one feature vector per region is required".into()));
    }
    let base = regions
        .iter()
        .map(|r| {
            Ok(params.alpha * region_mean(inputs.entropy, r)?
                + params.beta * region_mean(inputs.color_discontinuity, r)?
                + params.gamma * region_mean(inputs.surface_variation, r)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut score = base.clone();
    if params.decay < 1.0 {
        let km = kmeans(inputs.region_features, params.clusters, 100, seed)?;
        for c in 0..params.clusters {
            let mut members: Vec<usize> = (0..regions.len()).filter(|&r| km.assignments[r] == c).collect();
            members.sort_by(|&a, &b| base[b].total_cmp(&base[a]).then(regions[a].id.cmp(&regions[b].id)));
            for (rank, &r) in members.iter().enumerate() {
                score[r] = base[r] * params.decay.powi(rank as i32);
            }
        }
    }
    Ok(regions
        .iter()
        .zip(score)
        .map(|(r, score)| AcquisitionScore {
            region_id: r.id,
            score,
            policy: Policy::Redal,
            cycle,
        })
        .collect())
}

/// Region-mean scores for a point-wise policy.
pub fn region_scores(
    regions: &[&Region],
    point_scores: &[f64],
    policy: Policy,
    cycle: usize,
) -> Result<Vec<AcquisitionScore>> {
    regions
        .iter()
        .map(|r| {
            Ok(AcquisitionScore {
                region_id: r.id,
                score: region_mean(point_scores, r)?,
                policy,
                cycle,
            })
        })
        .collect()
}

fn greedy_fill(order: &[usize], regions: &RegionSet, budget: &SelectionBudget, cloud: &PointCloud) -> Result<Vec<usize>> {
    budget.validate()?;
    let mut spent = 0.0;
    let mut picked = Vec::new();
    for &id in order {
        let region = regions
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown region id {id}")))?;
        let cost = match *budget {
            SelectionBudget::PointFraction(_) => region.len() as f64 / cloud.len() as f64,
            SelectionBudget::AreaM2(_) => region_area(cloud, region)?,
            SelectionBudget::RegionCount(_) => 1.0,
        };
        let limit = match *budget {
            SelectionBudget::PointFraction(f) => f,
            SelectionBudget::AreaM2(a) => a,
            SelectionBudget::RegionCount(k) => k as f64,
        };
        if !picked.is_empty() && spent + cost > limit {
            break;
        }
        spent += cost;
        picked.push(id);
    }
    Ok(picked)
}

/// Highest scores first (ties to the lower id) until the next region would
/// exceed the budget; the best region is always taken.
pub fn select_regions(
    scores: &[AcquisitionScore],
    regions: &RegionSet,
    budget: &SelectionBudget,
    cloud: &PointCloud,
) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(Error::Empty("no candidate regions to select from".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite score for region {}", bad.region_id)));
    }
    let mut ranked: Vec<&AcquisitionScore> = scores.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.region_id.cmp(&b.region_id)));
    let order: Vec<usize> = ranked.iter().map(|s| s.region_id).collect();
    greedy_fill(&order, regions, budget, cloud)
}

/// Seeded shuffle of the candidates followed by the same budget fill.
pub fn random_policy(
    candidates: &[usize],
    regions: &RegionSet,
    budget: &SelectionBudget,
    cloud: &PointCloud,
    seed: u64,
) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::Empty("no candidate regions to select from".into()));
    }
    let mut order = candidates.to_vec();
    order.sort_unstable();
    order.shuffle(&mut seeded(seed));
    greedy_fill(&order, regions, budget, cloud)
}

/// Writes `region_id score` lines; entropy scores are divided by `ln C`.
pub fn write_scores<W: Write>(w: &mut W, scores: &[AcquisitionScore], class_count: usize) -> std::io::Result<()> {
    let norm = (class_count as f64).ln();
    for s in scores {
        let v = if s.policy == Policy::AvgEnt && norm > 0.0 { s.score / norm } else { s.score };
        writeln!(w, "{} {}", s.region_id, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::RegionKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn tensor(members: &[Vec<Vec<f64>>]) -> ProbabilityTensor {
        let n = members[0].len();
        let c = members[0][0].len();
        let data = members.iter().flatten().flatten().copied().collect();
        ProbabilityTensor::new(members.len(), n, c, data).unwrap()
    }

    fn onehot(c: usize, k: usize) -> Vec<f64> {
        (0..c).map(|i| (i == k) as u8 as f64).collect()
    }

    fn votes(v: &[usize], c: usize) -> ProbabilityTensor {
        tensor(&v.iter().map(|&k| vec![onehot(c, k)]).collect::<Vec<_>>())
    }

    fn line_cloud(n: usize) -> PointCloud {
        let pos = (0..n).map(|i| [i as f64, 0.0, 0.0]).collect();
        PointCloud::new(pos, vec![[0; 3]; n], vec![0; n], 2).unwrap()
    }

    /// Regions of the given sizes over consecutive points of a line cloud.
    fn sized_regions(cloud: &PointCloud, sizes: &[usize]) -> RegionSet {
        let mut start = 0;
        let regions = sizes
            .iter()
            .enumerate()
            .map(|(id, &s)| {
                let r = Region::new(cloud, id, RegionKind::Column, None, (start..start + s).collect()).unwrap();
                start += s;
                r
            })
            .collect();
        RegionSet { regions, resolution: None }
    }

    fn scored(values: &[f64]) -> Vec<AcquisitionScore> {
        values
            .iter()
            .enumerate()
            .map(|(id, &score)| AcquisitionScore { region_id: id, score, policy: Policy::AvgEnt, cycle: 0 })
            .collect()
    }

    #[test]
    fn mean_proba_examples() {
        let t = tensor(&[vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]]);
        assert_eq!(ensemble_mean_proba(&t), vec![vec![0.5, 0.5]]);
        let single = tensor(&[vec![vec![0.2, 0.3, 0.5]]]);
        assert_eq!(ensemble_mean_proba(&single), vec![vec![0.2, 0.3, 0.5]]);
    }

    #[test]
    fn var_examples() {
        assert_eq!(var_point(&votes(&[2, 2, 2, 2], 3), 0), 0.0);
        assert_eq!(var_point(&votes(&[0, 0, 1, 2], 3), 0), 0.5);
        assert_eq!(var_point(&votes(&[0, 0, 1, 1], 3), 0), 0.5);
        assert_eq!(var_point(&votes(&[1], 3), 0), 0.0);
        // member argmax ties go to the lowest class
        let t = tensor(&[vec![vec![0.5, 0.5]], vec![vec![0.9, 0.1]]]);
        assert_eq!(var_point(&t, 0), 0.0);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(ent_point(&[0.0, 1.0, 0.0]), 0.0);
        for c in 2..8 {
            let u = vec![1.0 / c as f64; c];
            assert!((ent_point(&u) - (c as f64).ln()).abs() < 1e-12);
        }
        assert!((ent_point(&[0.5, 0.25, 0.25]) - 1.0397).abs() < 1e-4);
    }

    #[test]
    fn region_mean_examples() {
        let cloud = line_cloud(4);
        let set = sized_regions(&cloud, &[2, 2]);
        assert_eq!(region_mean(&[0.7; 4], &set.regions[0]).unwrap(), 0.7);
        assert_eq!(region_mean(&[0.0, 1.0, 5.0, 5.0], &set.regions[0]).unwrap(), 0.5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let s: Vec<f64> = (0..4).map(|_| rng.random()).collect();
        assert!((region_mean(&s, &set.regions[1]).unwrap() - (s[2] + s[3]) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn color_discontinuity_examples() {
        let pos: Vec<[f64; 3]> = vec![[0.0; 3], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [10.0, 0.0, 0.0]];
        let mut col = vec![[255u8; 3]; 5];
        col[0] = [0, 0, 0];
        let cloud = PointCloud::new(pos.clone(), col, vec![0; 5], 2).unwrap();
        let d = color_discontinuity(&cloud, &SpatialIndex::from_cloud(&cloud), 3).unwrap();
        assert!((d[0] - 3f64.sqrt()).abs() < 1e-12);

        let flat = PointCloud::new(pos, vec![[40, 50, 60]; 5], vec![0; 5], 2).unwrap();
        let d = color_discontinuity(&flat, &SpatialIndex::from_cloud(&flat), 2).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
        assert!(color_discontinuity(&flat, &SpatialIndex::from_cloud(&flat), 1).is_err());
    }

    #[test]
    fn color_discontinuity_is_permutation_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let n = 200;
        let pos: Vec<[f64; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let col: Vec<[u8; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let a = PointCloud::new(pos.clone(), col.clone(), vec![0; n], 2).unwrap();
        let b = PointCloud::new(perm.iter().map(|&i| pos[i]).collect(), perm.iter().map(|&i| col[i]).collect(), vec![0; n], 2).unwrap();
        let da = color_discontinuity(&a, &SpatialIndex::from_cloud(&a), 6).unwrap();
        let db = color_discontinuity(&b, &SpatialIndex::from_cloud(&b), 6).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert!((db[k] - da[i]).abs() < 1e-12);
        }
    }

    fn redal_fixture(bases: &[f64], features: Vec<Vec<f64>>, params: RedalParams) -> Vec<f64> {
        let cloud = line_cloud(bases.len());
        let set = sized_regions(&cloud, &vec![1; bases.len()]);
        let refs: Vec<&Region> = set.regions.iter().collect();
        let zeros = vec![0.0; bases.len()];
        let inputs = RedalInputs {
            entropy: bases,
            color_discontinuity: &zeros,
            surface_variation: &zeros,
            region_features: &features,
        };
        redal_score(&refs, &inputs, &params, 0, 0).unwrap().iter().map(|s| s.score).collect()
    }

    #[test]
    fn redal_examples() {
        let p = RedalParams { beta: 0.0, gamma: 0.0, clusters: 1, decay: 1.0, ..Default::default() };
        assert_eq!(redal_fixture(&[0.3, 0.9, 0.1], vec![vec![0.0]; 3], p), vec![0.3, 0.9, 0.1]);

        let p = RedalParams { beta: 0.0, gamma: 0.0, clusters: 1, decay: 0.5, ..Default::default() };
        let s = redal_fixture(&[0.8, 0.6], vec![vec![0.0], vec![1.0]], p);
        assert!((s[0] - 0.8).abs() < 1e-15 && (s[1] - 0.3).abs() < 1e-15);

        // two well separated clusters each keep their best region undecayed
        let p = RedalParams { beta: 0.0, gamma: 0.0, clusters: 2, decay: 0.5, ..Default::default() };
        let s = redal_fixture(&[0.8, 0.6, 0.5, 0.4], vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]], p);
        assert_eq!(s, vec![0.8, 0.3, 0.5, 0.2]);
    }

    #[test]
    fn redal_linear_combination_without_decay() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let cloud = line_cloud(n);
        let set = sized_regions(&cloud, &[10, 10, 5, 15]);
        let refs: Vec<&Region> = set.regions.iter().collect();
        let e: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let feats: Vec<Vec<f64>> = (0..4).map(|_| vec![rng.random(), rng.random()]).collect();
        let params = RedalParams { alpha: 0.7, beta: 0.2, gamma: 1.3, clusters: 3, decay: 1.0, single_member: false };
        let inputs = RedalInputs { entropy: &e, color_discontinuity: &c, surface_variation: &v, region_features: &feats };
        let scores = redal_score(&refs, &inputs, &params, 9, 2).unwrap();
        for (s, r) in scores.iter().zip(&refs) {
            let want = 0.7 * region_mean(&e, r).unwrap() + 0.2 * region_mean(&c, r).unwrap() + 1.3 * region_mean(&v, r).unwrap();
            assert_eq!(s.score, want);
            assert_eq!(s.cycle, 2);
        }
        let too_many = RedalParams { clusters: 5, ..params };
        assert!(redal_score(&refs, &inputs, &too_many, 9, 2).is_err());
    }

    #[test]
    fn selection_examples() {
        let cloud = line_cloud(30);
        let set = sized_regions(&cloud, &[10, 10, 10]);
        let s = scored(&[0.9, 0.1, 0.5]);
        assert_eq!(select_regions(&s, &set, &SelectionBudget::RegionCount(2), &cloud).unwrap(), vec![0, 2]);
        assert_eq!(select_regions(&s, &set, &SelectionBudget::PointFraction(1.0), &cloud).unwrap(), vec![0, 2, 1]);
        assert_eq!(select_regions(&s, &set, &SelectionBudget::PointFraction(0.01), &cloud).unwrap(), vec![0]);
        // stops at the first region that does not fit
        assert_eq!(select_regions(&s, &set, &SelectionBudget::PointFraction(0.5), &cloud).unwrap(), vec![0]);
        // 10 collinear points span 9 m of x only
        assert_eq!(select_regions(&s, &set, &SelectionBudget::AreaM2(1.0), &cloud).unwrap(), vec![0, 2, 1]);
        assert!(select_regions(&[], &set, &SelectionBudget::RegionCount(1), &cloud).is_err());
        let ties = scored(&[0.5, 0.5, 0.5]);
        assert_eq!(select_regions(&ties, &set, &SelectionBudget::RegionCount(2), &cloud).unwrap(), vec![0, 1]);
    }

    #[test]
    fn random_policy_examples() {
        let cloud = line_cloud(40);
        let set = sized_regions(&cloud, &[10; 4]);
        let ids = [0, 1, 2, 3];
        let b = SelectionBudget::RegionCount(2);
        assert_eq!(random_policy(&ids, &set, &b, &cloud, 5).unwrap(), random_policy(&ids, &set, &b, &cloud, 5).unwrap());
        let mut all = random_policy(&ids, &set, &SelectionBudget::RegionCount(4), &cloud, 5).unwrap();
        all.sort_unstable();
        assert_eq!(all, ids);
        assert!(random_policy(&[], &set, &b, &cloud, 5).is_err());
    }

    #[test]
    fn random_policy_is_uniform() {
        let cloud = line_cloud(40);
        let set = sized_regions(&cloud, &[10; 4]);
        let mut counts = [0usize; 4];
        for seed in 0..1000 {
            let pick = random_policy(&[0, 1, 2, 3], &set, &SelectionBudget::RegionCount(1), &cloud, seed).unwrap();
            counts[pick[0]] += 1;
        }
        assert!(counts.iter().all(|&c| (190..=310).contains(&c)), "{counts:?}");
    }

    #[test]
    fn dump_normalizes_entropy_only() {
        let mut out = Vec::new();
        let mut s = scored(&[2f64.ln()]);
        s.push(AcquisitionScore { region_id: 1, score: 0.25, policy: Policy::AvgVar, cycle: 0 });
        write_scores(&mut out, &s, 2).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0 1\n1 0.25\n");
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(p.to_string().parse::<Policy>().unwrap(), p);
        }
        assert!("best".parse::<Policy>().is_err());
    }

    proptest! {
        #[test]
        fn var_and_entropy_ranges(seed in 0u64..1000, members in 1usize..6, classes in 2usize..6) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<Vec<f64>>> = (0..members)
                .map(|_| (0..20).map(|_| {
                    let raw: Vec<f64> = (0..classes).map(|_| rng.random::<f64>()).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|v| v / s).collect()
                }).collect())
                .collect();
            let t = tensor(&rows);
            for v in var_scores(&t) {
                let k = (v * members as f64).round();
                prop_assert!((v - k / members as f64).abs() < 1e-12);
                prop_assert!(v >= 0.0 && v <= 1.0 - 1.0 / members as f64 + 1e-12);
            }
            let mean = ensemble_mean_proba(&t);
            for p in &mean {
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            for h in ent_scores(&mean) {
                prop_assert!(h >= 0.0 && h <= (classes as f64).ln() + 1e-12);
            }
        }

        #[test]
        fn var_is_class_permutation_invariant(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<usize> = (0..5).map(|_| rng.random_range(0..4)).collect();
            let mut perm = vec![0, 1, 2, 3];
            perm.shuffle(&mut rng);
            let w: Vec<usize> = v.iter().map(|&c| perm[c]).collect();
            prop_assert_eq!(var_point(&votes(&v, 4), 0), var_point(&votes(&w, 4), 0));
        }

        #[test]
        fn selection_is_scale_invariant(seed in 0u64..1000, factor in 0.001f64..1000.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cloud = line_cloud(60);
            let set = sized_regions(&cloud, &[5, 10, 15, 5, 10, 15]);
            let values: Vec<f64> = (0..6).map(|_| rng.random()).collect();
            let scaled: Vec<f64> = values.iter().map(|v| v * factor).collect();
            let b = SelectionBudget::PointFraction(rng.random_range(0.05..1.0));
            prop_assert_eq!(
                select_regions(&scored(&values), &set, &b, &cloud).unwrap(),
                select_regions(&scored(&scaled), &set, &b, &cloud).unwrap()
            );
        }
    }
}
