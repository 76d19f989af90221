use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{mix64, DatasetManifest};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub warnings: Vec<String>,
}

fn group_key(split_id: u8, group: u32) -> u64 {
    mix64(u64::from(group) ^ mix64(0x5EED_0000 + u64::from(split_id)))
}

/// Group-aware train/test partition.
///
/// Within each class, groups are visited in an order keyed by `split_id` and moved to the
/// test side until at least `test_fraction` of that class's clips are there. A group is
/// never divided. Classes with a single group stay entirely in train.
pub fn make_splits(manifest: &DatasetManifest, split_id: u8, test_fraction: f64) -> Result<Split> {
    if !(1..=3).contains(&split_id) {
        return Err(Error::Input(format!("split id must be 1, 2 or 3, got {split_id}")));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Input(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut class_groups: BTreeMap<usize, BTreeMap<u32, usize>> = BTreeMap::new();
    for c in &manifest.clips {
        *class_groups.entry(c.label).or_default().entry(c.group).or_default() += 1;
    }

    let mut test_groups: BTreeSet<u32> = BTreeSet::new();
    let mut warnings = Vec::new();
    for (&label, groups) in &class_groups {
        let class_name = manifest.classes.get(label).map_or("?", String::as_str);
        if groups.len() < 2 {
            let msg = format!("class `{class_name}` has a single group; kept entirely in train");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        let total: usize = groups.values().sum();
        let target = test_fraction * total as f64;
        let mut order: Vec<u32> = groups.keys().copied().collect();
        order.sort_by_key(|&g| (group_key(split_id, g), g));
        // groups already claimed through another class count toward this one
        let mut in_test: usize = groups.iter().filter(|(g, _)| test_groups.contains(g)).map(|(_, n)| n).sum();
        for g in order {
            if (in_test as f64) >= target {
                break;
            }
            if test_groups.insert(g) {
                in_test += groups[&g];
            }
        }
    }

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for c in &manifest.clips {
        if test_groups.contains(&c.group) {
            test.push(c.id.clone());
        } else {
            train.push(c.id.clone());
        }
    }
    Ok(Split { train, test, warnings })
}

/// Shuffle `ids` by `(seed, epoch)` and cut them into chunks of `batch_size`; the last chunk may be short.
pub fn batch_iter<T: Clone>(ids: &[T], batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<T>> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut order = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(mix64(seed ^ mix64(epoch.wrapping_add(0xBA7C))));
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(<[T]>::to_vec).collect()
}
