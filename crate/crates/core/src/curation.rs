//! Dataset curation: recovering signer identities from face embeddings and
//! summarizing a manifest.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Manifest, Split};

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("embedding {index} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("clustering threshold must be finite, got {0}")]
    BadThreshold(f64),
    #[error("no duration available for instance {0:?}")]
    MissingDuration(String),
}

/// One face embedding, as read from an embeddings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceEmbedding {
    pub id: String,
    pub embedding: Vec<f64>,
}

/// Group embeddings into signer clusters: two embeddings share a signer when
/// their Euclidean distance is strictly below `threshold`, and sharing is
/// transitive (connected components of the threshold graph).
///
/// Returns one cluster id per embedding. Ids count up from 0 in order of
/// each cluster's smallest member index.
pub fn cluster_signers(
    embeddings: &[Vec<f64>],
    threshold: f64,
) -> Result<Vec<usize>, CurationError> {
    if !threshold.is_finite() {
        return Err(CurationError::BadThreshold(threshold));
    }
    let n = embeddings.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let dim = embeddings[0].len();
    for (index, e) in embeddings.iter().enumerate() {
        if e.len() != dim {
            return Err(CurationError::DimensionMismatch {
                index,
                got: e.len(),
                expected: dim,
            });
        }
    }

    let linked = |a: &[f64], b: &[f64]| {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        d2.sqrt() < threshold
    };

    // Breadth-first flood fill over the implicit graph, visiting seeds in
    // index order so cluster ids come out sorted by smallest member.
    let mut assignment = vec![usize::MAX; n];
    let mut next_id = 0;
    for seed in 0..n {
        if assignment[seed] != usize::MAX {
            continue;
        }
        assignment[seed] = next_id;
        let mut queue = VecDeque::from([seed]);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if assignment[j] == usize::MAX && linked(&embeddings[i], &embeddings[j]) {
                    assignment[j] = next_id;
                    queue.push_back(j);
                }
            }
        }
        next_id += 1;
    }
    Ok(assignment)
}

/// Member indices per cluster, in cluster id order.
pub fn cluster_members(assignment: &[usize]) -> Vec<Vec<usize>> {
    let clusters = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); clusters];
    for (i, &c) in assignment.iter().enumerate() {
        members[c].push(i);
    }
    members
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub unassigned: usize,
}

/// Clip-length summary in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub mean_secs: f64,
    pub min_secs: f64,
    pub max_secs: f64,
    /// Mean over glosses of the per-gloss population standard deviation.
    pub intra_class_std_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetStats {
    pub glosses: usize,
    pub instances: usize,
    pub mean_instances_per_gloss: f64,
    pub min_instances_per_gloss: usize,
    pub max_instances_per_gloss: usize,
    pub signers: usize,
    pub split_counts: SplitCounts,
    /// Requires per-instance durations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub durations: Option<DurationStats>,
}

/// Summarize a manifest. `durations` maps instance ids to clip lengths in
/// seconds; pass one entry per instance (or `None` to skip duration stats).
pub fn compute_stats(
    manifest: &Manifest,
    durations: Option<&HashMap<String, f64>>,
) -> Result<DatasetStats, CurationError> {
    let glosses = manifest.entries.len();
    let instances = manifest.instance_count();
    let per_gloss: Vec<usize> = manifest.entries.iter().map(|e| e.instances.len()).collect();

    let mut signers = BTreeSet::new();
    let mut split_counts = SplitCounts::default();
    let mut per_gloss_durations: Vec<Vec<f64>> = Vec::new();
    for entry in &manifest.entries {
        let mut gloss_durations = Vec::new();
        for inst in &entry.instances {
            signers.insert(inst.signer_id);
            match inst.split {
                Some(Split::Train) => split_counts.train += 1,
                Some(Split::Val) => split_counts.val += 1,
                Some(Split::Test) => split_counts.test += 1,
                None => split_counts.unassigned += 1,
            }
            if let Some(map) = durations {
                gloss_durations.push(
                    map.get(&inst.instance_id)
                        .copied()
                        .ok_or_else(|| CurationError::MissingDuration(inst.instance_id.clone()))?,
                );
            }
        }
        per_gloss_durations.push(gloss_durations);
    }

    Ok(DatasetStats {
        glosses,
        instances,
        mean_instances_per_gloss: if glosses == 0 {
            0.0
        } else {
            instances as f64 / glosses as f64
        },
        min_instances_per_gloss: per_gloss.iter().copied().min().unwrap_or(0),
        max_instances_per_gloss: per_gloss.iter().copied().max().unwrap_or(0),
        signers: signers.len(),
        split_counts,
        durations: durations.map(|_| duration_stats(&per_gloss_durations)),
    })
}

fn duration_stats(per_gloss: &[Vec<f64>]) -> DurationStats {
    let all: Vec<f64> = per_gloss.iter().flatten().copied().collect();
    if all.is_empty() {
        return DurationStats {
            mean_secs: 0.0,
            min_secs: 0.0,
            max_secs: 0.0,
            intra_class_std_secs: 0.0,
        };
    }
    let population_std = |xs: &[f64]| {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64).sqrt()
    };
    let occupied: Vec<&Vec<f64>> = per_gloss.iter().filter(|g| !g.is_empty()).collect();
    DurationStats {
        mean_secs: all.iter().sum::<f64>() / all.len() as f64,
        min_secs: all.iter().copied().fold(f64::INFINITY, f64::min),
        max_secs: all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        intra_class_std_secs: occupied.iter().map(|g| population_std(g)).sum::<f64>()
            / occupied.len() as f64,
    }
}
