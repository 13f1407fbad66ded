//! Density-based clustering restricted to a subset of indexed points.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spatial::SpatialIndex;

pub const NOISE: i64 = -1;

/// DBSCAN over the points `indices` of `index`.
///
/// A point is core when at least `min_pts` subset points (itself included)
/// lie within `eps`. Clusters are numbered in order of their lowest-index
/// core point; a border point joins the lowest-numbered cluster that has a
/// core point within `eps` of it. Labels are aligned with `indices`.
pub fn dbscan(index: &SpatialIndex, indices: &[usize], eps: f64, min_pts: usize) -> Result<Vec<i64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::InvalidArgument("min_pts must be at least 1".into()));
    }
    let n = index.len();
    let mut slot = vec![usize::MAX; n];
    for (k, &p) in indices.iter().enumerate() {
        if p >= n {
            return Err(Error::IndexOutOfRange { index: p, len: n });
        }
        if slot[p] != usize::MAX {
            return Err(Error::InvalidArgument(format!("point {p} listed twice")));
        }
        slot[p] = k;
    }

    let positions = index.positions();
    let neighbors = |k: usize| -> Vec<usize> {
        let mut out = Vec::new();
        index.for_each_within(&positions[indices[k]], eps, |j, _| {
            if slot[j] != usize::MAX {
                out.push(j);
            }
        });
        out.sort_unstable();
        out
    };
    let core: Vec<bool> = (0..indices.len())
        .into_par_iter()
        .map(|k| {
            let mut count = 0;
            index.for_each_within(&positions[indices[k]], eps, |j, _| {
                if slot[j] != usize::MAX {
                    count += 1;
                }
            });
            count >= min_pts
        })
        .collect();

    let mut labels = vec![NOISE; indices.len()];
    let mut visit: Vec<usize> = (0..indices.len()).collect();
    visit.sort_unstable_by_key(|&k| indices[k]);
    let mut next = 0i64;
    let mut queue = VecDeque::new();
    for start in visit {
        if !core[start] || labels[start] != NOISE {
            continue;
        }
        let cluster = next;
        next += 1;
        labels[start] = cluster;
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            for j in neighbors(k) {
                let s = slot[j];
                if labels[s] == NOISE {
                    labels[s] = cluster;
                    if core[s] {
                        queue.push_back(s);
                    }
                }
            }
        }
    }
    Ok(labels)
}
