use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarError, Result};
use crate::label::ActivityLabel;

/// Train/validation/test proportions and how items are assigned.
///
/// With `group_by_record` set, all windows of one record stay in the same
/// part. Off by default; overlapping windows from one record then leak across
/// parts and inflate test accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
    pub stratified: bool,
    pub group_by_record: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            seed: 0,
            stratified: true,
            group_by_record: false,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ratios = [self.train, self.val, self.test];
        if ratios.iter().any(|r| !(*r > 0.0)) {
            return Err(HarError::config("split ratios must be positive"));
        }
        if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(HarError::config("split ratios must sum to 1"));
        }
        Ok(())
    }

    /// (train, val, test) sizes: val and test are floored, train takes the rest.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
        let (val, test) = (floor(self.val), floor(self.test));
        (n - val - test, val, test)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitItem {
    pub id: String,
    pub label: ActivityLabel,
    pub group: String,
}

/// Indices into the item list, each part sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Orders units so that every prefix holds each class in proportion: each
/// class is shuffled, unit `r` of a class with `n` units gets key
/// `(r + 0.5) / n`, and units are merged by key.
fn stratified_order(labels: &[ActivityLabel], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut by_class: BTreeMap<ActivityLabel, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut keyed = Vec::with_capacity(labels.len());
    for (label, mut members) in by_class {
        members.shuffle(rng);
        let n = members.len() as f64;
        for (rank, idx) in members.into_iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / n, label.index(), idx));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, idx)| idx).collect()
}

fn unit_order(labels: &[ActivityLabel], stratified: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if stratified {
        stratified_order(labels, rng)
    } else {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(rng);
        order
    }
}

pub fn split_dataset(items: &[SplitItem], spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let n = items.len();
    if n < 10 {
        return Err(HarError::data(format!("need at least 10 items to split, got {n}")));
    }
    let (_, n_val, n_test) = spec.sizes(n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    if spec.group_by_record {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, item) in items.iter().enumerate() {
            groups.entry(item.group.as_str()).or_default().push(i);
        }
        let groups: Vec<Vec<usize>> = groups.into_values().collect();
        let labels: Vec<ActivityLabel> = groups.iter().map(|g| items[g[0]].label).collect();
        for gi in unit_order(&labels, spec.stratified, &mut rng) {
            let members = &groups[gi];
            let target = if split.test.len() < n_test {
                &mut split.test
            } else if split.val.len() < n_val {
                &mut split.val
            } else {
                &mut split.train
            };
            target.extend_from_slice(members);
        }
    } else {
        let labels: Vec<ActivityLabel> = items.iter().map(|i| i.label).collect();
        let order = unit_order(&labels, spec.stratified, &mut rng);
        split.test = order[..n_test].to_vec();
        split.val = order[n_test..n_test + n_val].to_vec();
        split.train = order[n_test + n_val..].to_vec();
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{HashMap, HashSet};

    fn items(n: usize, per_group: usize) -> Vec<SplitItem> {
        (0..n)
            .map(|i| SplitItem {
                id: format!("w{i}"),
                label: ActivityLabel::ALL[(i / per_group) % 4],
                group: format!("rec{}", i / per_group),
            })
            .collect()
    }

    #[test]
    fn full_dataset_sizes() {
        let s = split_dataset(&items(3321, 30), &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (2657, 332, 332));
        let s = split_dataset(&items(10, 1), &SplitSpec::default()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn deterministic_per_seed() {
        let xs = items(200, 5);
        let spec = SplitSpec {
            seed: 9,
            ..Default::default()
        };
        assert_eq!(split_dataset(&xs, &spec).unwrap(), split_dataset(&xs, &spec).unwrap());
        let other = SplitSpec { seed: 10, ..spec };
        assert_ne!(split_dataset(&xs, &spec).unwrap(), split_dataset(&xs, &other).unwrap());
    }

    #[test]
    fn stratified_test_set_is_balanced() {
        let s = split_dataset(&items(400, 1), &SplitSpec::default()).unwrap();
        let mut counts = [0; 4];
        for &i in &s.test {
            counts[i % 4] += 1;
        }
        assert_eq!(counts, [10, 10, 10, 10]);
    }

    #[test]
    fn invalid_specs() {
        let bad = SplitSpec {
            train: 0.7,
            ..Default::default()
        };
        assert!(matches!(split_dataset(&items(50, 1), &bad), Err(HarError::Config(_))));
        let neg = SplitSpec {
            val: 0.0,
            train: 0.9,
            ..Default::default()
        };
        assert!(split_dataset(&items(50, 1), &neg).is_err());
        assert!(split_dataset(&items(9, 1), &SplitSpec::default()).is_err());
    }

    proptest! {
        #[test]
        fn parts_partition_ids(n in 10usize..600, seed in any::<u64>(), stratified in any::<bool>(), grouped in any::<bool>(), per_group in 1usize..20) {
            let xs = items(n, per_group);
            let spec = SplitSpec { seed, stratified, group_by_record: grouped, ..Default::default() };
            let s = split_dataset(&xs, &spec).unwrap();
            let mut seen = HashSet::new();
            for &i in s.train.iter().chain(&s.val).chain(&s.test) {
                prop_assert!(seen.insert(i));
            }
            prop_assert_eq!(seen.len(), n);
            if grouped {
                let mut part_of: HashMap<&str, u8> = HashMap::new();
                for (part, idxs) in [(0u8, &s.train), (1, &s.val), (2, &s.test)] {
                    for &i in idxs {
                        let prev = part_of.insert(xs[i].group.as_str(), part);
                        prop_assert!(prev.is_none() || prev == Some(part));
                    }
                }
            } else {
                prop_assert_eq!((s.train.len(), s.val.len(), s.test.len()), spec.sizes(n));
            }
        }
    }
}
