//! The dataset manifest: glosses, their video instances, and split labels.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (train, val or test)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub signer_id: u32,
    pub variation_id: u32,
    pub frame_start: u32,
    pub frame_end: u32,
    /// `[x, y, w, h]` in pixels, around the signer.
    pub bbox: [f64; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlossEntry {
    pub gloss: String,
    pub instances: Vec<Instance>,
}

/// The whole dataset description; serializes as a plain list of gloss
/// entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Manifest {
    pub entries: Vec<GlossEntry>,
}

impl Manifest {
    /// Gloss names in manifest order. This order defines the class indices
    /// used by models and checkpoints.
    pub fn glosses(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.gloss.clone()).collect()
    }

    pub fn instance_count(&self) -> usize {
        self.entries.iter().map(|e| e.instances.len()).sum()
    }

    /// `(gloss index, instance)` pairs carrying the given split label.
    pub fn instances_in_split(&self, split: Split) -> Vec<(usize, &Instance)> {
        self.entries
            .iter()
            .enumerate()
            .flat_map(|(g, entry)| {
                entry
                    .instances
                    .iter()
                    .filter(move |inst| inst.split == Some(split))
                    .map(move |inst| (g, inst))
            })
            .collect()
    }

    /// Reject duplicate glosses, duplicate instance ids and inverted frame
    /// ranges.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut glosses = HashSet::new();
        let mut ids = HashSet::new();
        for entry in &self.entries {
            if !glosses.insert(entry.gloss.as_str()) {
                return Err(DataError::DuplicateGloss(entry.gloss.clone()));
            }
            for inst in &entry.instances {
                if !ids.insert(inst.instance_id.as_str()) {
                    return Err(DataError::DuplicateInstance(inst.instance_id.clone()));
                }
                if inst.frame_start > inst.frame_end {
                    return Err(DataError::BadFrameOrder {
                        instance_id: inst.instance_id.clone(),
                        start: inst.frame_start,
                        end: inst.frame_end,
                    });
                }
            }
        }
        Ok(())
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest: Manifest =
        serde_json::from_reader(BufReader::new(file)).map_err(|source| DataError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, manifest).map_err(|source| DataError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    writer.write_all(b"\n").map_err(io_err)?;
    writer.flush().map_err(io_err)
}

/// The `size` glosses with the most instances, ordered by instance count
/// descending and lexicographically on ties. Instances come through
/// untouched.
pub fn build_subset(manifest: &Manifest, size: usize) -> Result<Manifest, DataError> {
    if size > manifest.entries.len() {
        return Err(DataError::NotEnoughGlosses {
            requested: size,
            available: manifest.entries.len(),
        });
    }
    let mut ranked: Vec<&GlossEntry> = manifest.entries.iter().collect();
    ranked.sort_by(|a, b| {
        b.instances
            .len()
            .cmp(&a.instances.len())
            .then_with(|| a.gloss.cmp(&b.gloss))
    });
    Ok(Manifest {
        entries: ranked.into_iter().take(size).cloned().collect(),
    })
}

/// Default gloss-frequency cutoff: glosses with fewer videos are dropped.
pub const DEFAULT_MIN_VIDEOS: usize = 7;
/// Default per-variation cutoff: dialect variations with fewer examples are
/// dropped.
pub const DEFAULT_MIN_EXAMPLES: usize = 5;

/// Drop glosses with fewer than `min_videos` instances.
pub fn filter_gloss_min_count(manifest: &Manifest, min_videos: usize) -> Manifest {
    Manifest {
        entries: manifest
            .entries
            .iter()
            .filter(|entry| entry.instances.len() >= min_videos)
            .cloned()
            .collect(),
    }
}

/// Drop every (gloss, variation id) group with fewer than `min_examples`
/// instances; glosses left without instances are dropped.
pub fn filter_variation_min_count(manifest: &Manifest, min_examples: usize) -> Manifest {
    let entries = manifest
        .entries
        .iter()
        .filter_map(|entry| {
            let mut counts: HashMap<u32, usize> = HashMap::new();
            for inst in &entry.instances {
                *counts.entry(inst.variation_id).or_insert(0) += 1;
            }
            let instances: Vec<Instance> = entry
                .instances
                .iter()
                .filter(|inst| counts[&inst.variation_id] >= min_examples)
                .cloned()
                .collect();
            (!instances.is_empty()).then(|| GlossEntry {
                gloss: entry.gloss.clone(),
                instances,
            })
        })
        .collect();
    Manifest { entries }
}

/// Apportion `n` instances to (train, val, test) in 4:1:1 proportions by
/// largest remainder, then repair empty splits by taking one instance from
/// the largest split. Seats on tied remainders (and repairs on tied sizes)
/// go to the earlier split in (train, val, test) order.
pub fn apportion_4_1_1(n: usize) -> (usize, usize, usize) {
    const WEIGHTS: [usize; 3] = [4, 1, 1];
    const TOTAL: usize = 6;
    let mut parts = [0usize; 3];
    let mut remainders = [0usize; 3];
    for i in 0..3 {
        parts[i] = n * WEIGHTS[i] / TOTAL;
        remainders[i] = n * WEIGHTS[i] % TOTAL;
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    let mut leftover = n - parts.iter().sum::<usize>();
    for &i in &order {
        if leftover == 0 {
            break;
        }
        parts[i] += 1;
        leftover -= 1;
    }
    while let Some(empty) = parts.iter().position(|&p| p == 0) {
        let largest = (0..3)
            .max_by(|&a, &b| parts[a].cmp(&parts[b]).then(b.cmp(&a)))
            .unwrap();
        if parts[largest] < 2 {
            // Fewer than 3 instances: not every split can be filled.
            break;
        }
        parts[largest] -= 1;
        parts[empty] += 1;
    }
    (parts[0], parts[1], parts[2])
}

/// Assign every instance a train/val/test label, shuffling within each gloss
/// and apportioning 4:1:1. Any existing labels are overwritten. Every gloss
/// ends up with at least one instance per split, which needs three instances
/// to exist.
pub fn split_manifest<R: Rng>(manifest: &Manifest, rng: &mut R) -> Result<Manifest, DataError> {
    for entry in &manifest.entries {
        if entry.instances.len() < 3 {
            return Err(DataError::TooFewInstances {
                gloss: entry.gloss.clone(),
                count: entry.instances.len(),
            });
        }
    }
    let mut out = manifest.clone();
    for entry in &mut out.entries {
        let n = entry.instances.len();
        let (n_train, n_val, _) = apportion_4_1_1(n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for (rank, &idx) in order.iter().enumerate() {
            entry.instances[idx].split = Some(if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    Ok(out)
}
