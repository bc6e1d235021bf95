//! Ward's minimum-variance hierarchical agglomerative clustering with a
//! deterministic cut into k clusters.
//!
//! Pairwise dissimilarities are initialized to squared Euclidean distances
//! and inter-cluster costs are updated with the Lance-Williams recurrence
//! for Ward linkage. Merge heights are the recurrence value at merge time;
//! heights are internal and only the merge order affects assignments.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::StandardizedMatrix;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("k = {k} out of range for {n} points")]
    KOutOfRange { k: usize, n: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Symmetric pairwise dissimilarities with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    fn set(&mut self, i: usize, j: usize, value: f64) {
        self.entries[i * self.n + j] = value;
        self.entries[j * self.n + i] = value;
    }
}

/// One agglomeration: the two merged cluster ids, the Ward merge cost, and
/// the size of the merged cluster. Original points are ids 0..n-1; the
/// cluster created by step t gets id n+t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// The full merge history of an agglomerative run over n points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub steps: Vec<MergeStep>,
}

/// A cut of the dendrogram: per-record labels in 1..=k, numbered in order
/// of each cluster's smallest member row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    pub sizes: Vec<usize>,
}

impl ClusterAssignment {
    /// Record indices belonging to cluster `label` (1-based).
    pub fn members(&self, label: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Pairwise squared Euclidean distances between the rows of a standardized
/// matrix. Panics on non-finite entries (parsed datasets are always finite).
pub fn squared_euclidean(m: &StandardizedMatrix) -> DistanceMatrix {
    let n = m.n_rows();
    let mut dm = DistanceMatrix {
        n,
        entries: vec![0.0; n * n],
    };
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = m.values[i]
                .iter()
                .zip(&m.values[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            assert!(
                d.is_finite(),
                "non-finite distance between rows {i} and {j}"
            );
            dm.set(i, j, d);
        }
    }
    dm
}

/// Agglomerate by Ward's criterion.
///
/// Each step merges the active pair with minimal cost, ties broken by the
/// smallest (left, then right) pair of minimum original member indices;
/// costs to the merged cluster are updated with the Lance-Williams Ward
/// recurrence d(k, i+j) = [(n_i+n_k) d(k,i) + (n_j+n_k) d(k,j)
/// - n_k d(i,j)] / (n_i+n_j+n_k).
pub fn ward_cluster(d: &DistanceMatrix) -> Result<Dendrogram, ClusterError> {
    let n = d.n;
    if n < 2 {
        return Err(ClusterError::InsufficientData { needed: 2, got: n });
    }
    let mut dist = d.clone();
    let mut alive: Vec<bool> = vec![true; n];
    let mut size: Vec<usize> = vec![1; n];
    let min_member: Vec<usize> = (0..n).collect();
    let mut cluster_id: Vec<usize> = (0..n).collect();

    let mut steps = Vec::with_capacity(n - 1);
    for t in 0..(n - 1) {
        // Find the minimal-cost active pair; pair keys are the ordered
        // minimum original member indices.
        let mut best: Option<(f64, usize, usize, (usize, usize))> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !alive[j] {
                    continue;
                }
                let cost = dist.get(i, j);
                let key = if min_member[i] < min_member[j] {
                    (min_member[i], min_member[j])
                } else {
                    (min_member[j], min_member[i])
                };
                let better = match &best {
                    None => true,
                    Some((bc, _, _, bk)) => cost < *bc || (cost == *bc && key < *bk),
                };
                if better {
                    best = Some((cost, i, j, key));
                }
            }
        }
        let (height, i, j, _) = best.expect("at least one active pair");
        // Keep the slot whose cluster holds the smaller original index.
        let (keep, drop) = if min_member[i] <= min_member[j] {
            (i, j)
        } else {
            (j, i)
        };

        let (ni, nj) = (size[keep] as f64, size[drop] as f64);
        for k in 0..n {
            if !alive[k] || k == keep || k == drop {
                continue;
            }
            let nk = size[k] as f64;
            let updated = ((ni + nk) * dist.get(k, keep) + (nj + nk) * dist.get(k, drop)
                - nk * height)
                / (ni + nj + nk);
            dist.set(k, keep, updated);
        }

        steps.push(MergeStep {
            left: cluster_id[keep],
            right: cluster_id[drop],
            height,
            size: size[keep] + size[drop],
        });
        size[keep] += size[drop];
        cluster_id[keep] = n + t;
        alive[drop] = false;
    }

    Ok(Dendrogram { n, steps })
}

/// Cut the dendrogram into k clusters by undoing the last k-1 merges,
/// relabeling canonically by each cluster's smallest member row index.
pub fn cut_k(dend: &Dendrogram, k: usize) -> Result<ClusterAssignment, ClusterError> {
    let n = dend.n;
    if k == 0 || k > n {
        return Err(ClusterError::KOutOfRange { k, n });
    }
    let mut members: std::collections::HashMap<usize, Vec<usize>> =
        (0..n).map(|i| (i, vec![i])).collect();
    for (t, step) in dend.steps.iter().take(n - k).enumerate() {
        let mut merged = members.remove(&step.left).expect("left cluster exists");
        let mut right = members.remove(&step.right).expect("right cluster exists");
        merged.append(&mut right);
        members.insert(n + t, merged);
    }
    let mut clusters: Vec<Vec<usize>> = members.into_values().collect();
    clusters.sort_by_key(|c| *c.iter().min().expect("nonempty cluster"));

    let mut labels = vec![0usize; n];
    let mut sizes = Vec::with_capacity(k);
    for (idx, cluster) in clusters.iter().enumerate() {
        for &row in cluster {
            labels[row] = idx + 1;
        }
        sizes.push(cluster.len());
    }
    Ok(ClusterAssignment { labels, k, sizes })
}

/// Serialize an assignment as `row_id,cluster` CSV.
pub fn write_assignment_csv<W: io::Write>(
    assignment: &ClusterAssignment,
    row_ids: &[u32],
    sink: W,
) -> Result<(), ClusterError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["row_id", "cluster"])?;
    for (row_id, label) in row_ids.iter().zip(&assignment.labels) {
        writer.write_record([row_id.to_string(), label.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}
