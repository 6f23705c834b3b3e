use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Partition::Train),
            "validation" => Some(Partition::Validation),
            "test" => Some(Partition::Test),
            _ => None,
        }
    }
}

/// Disjoint train/validation/test patient sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    pub fn ids(&self, part: Partition) -> &[String] {
        match part {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// 80/10/10 split. Validation and test each get `round(n / 10)` patients
/// (at least one), the remainder goes to training. Ids are sorted before a
/// seeded shuffle, so the result depends only on the id set and the seed.
pub fn split_dataset(patient_ids: &[String], seed: u64) -> Result<DatasetSplit> {
    let mut ids = patient_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 distinct patients to split, got {}",
            ids.len()
        )));
    }
    ids.shuffle(&mut rng::seeded(seed));
    let n = ids.len();
    let tenth = ((n as f64) / 10.0).round().max(1.0) as usize;
    let test = ids.split_off(n - tenth);
    let validation = ids.split_off(n - 2 * tenth);
    Ok(DatasetSplit {
        train: ids,
        validation,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("P{i}")).collect()
    }

    #[test]
    fn full_cohort_sizes() {
        let s = split_dataset(&ids(30_812), 1).unwrap();
        assert_eq!(
            (s.train.len(), s.validation.len(), s.test.len()),
            (24_650, 3_081, 3_081)
        );
    }

    #[test]
    fn ten_ids() {
        let s = split_dataset(&ids(10), 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn deterministic() {
        assert_eq!(split_dataset(&ids(100), 5).unwrap(), split_dataset(&ids(100), 5).unwrap());
        assert_ne!(split_dataset(&ids(100), 5).unwrap(), split_dataset(&ids(100), 6).unwrap());
    }

    #[test]
    fn too_few_patients() {
        assert!(split_dataset(&ids(2), 0).is_err());
        assert_eq!(split_dataset(&ids(3), 0).unwrap().train.len(), 1);
    }

    proptest! {
        #[test]
        fn disjoint_and_exhaustive(n in 3usize..400, seed in any::<u64>()) {
            let all = ids(n);
            let s = split_dataset(&all, seed).unwrap();
            let mut seen = HashSet::new();
            for id in s.train.iter().chain(&s.validation).chain(&s.test) {
                prop_assert!(seen.insert(id.clone()));
            }
            prop_assert_eq!(seen.len(), n);
        }
    }
}
