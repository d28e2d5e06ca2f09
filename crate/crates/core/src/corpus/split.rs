use std::collections::{BTreeMap, HashMap};

use super::{Dataset, Interaction};
use crate::error::{Error, Result};

/// Per-user temporal partition of a dataset's interactions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<Interaction>,
    pub validation: Vec<Interaction>,
    pub test: Vec<Interaction>,
}

impl SplitDataset {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Part {
    Train,
    Validation,
    Test,
}

/// Sends each user's latest interaction to test and the second-latest to
/// validation; everything earlier goes to train.
///
/// Users with two interactions get one train and one test entry, users with a
/// single interaction are train-only. Timestamp ties are broken by item id.
/// Within each part, interactions keep their original dataset order.
pub fn temporal_split(d: &Dataset) -> SplitDataset {
    let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (k, it) in d.interactions.iter().enumerate() {
        by_user.entry(&it.user).or_default().push(k);
    }

    let mut part = vec![Part::Train; d.interactions.len()];
    for idx in by_user.values_mut() {
        idx.sort_by(|&a, &b| {
            let (x, y) = (&d.interactions[a], &d.interactions[b]);
            x.timestamp.cmp(&y.timestamp).then_with(|| x.item.cmp(&y.item))
        });
        let n = idx.len();
        if n >= 2 {
            part[idx[n - 1]] = Part::Test;
        }
        if n >= 3 {
            part[idx[n - 2]] = Part::Validation;
        }
    }

    let mut out = SplitDataset::default();
    for (it, p) in d.interactions.iter().zip(part) {
        match p {
            Part::Train => out.train.push(it.clone()),
            Part::Validation => out.validation.push(it.clone()),
            Part::Test => out.test.push(it.clone()),
        }
    }
    out
}

/// Checks that `split` partitions `original` and respects per-user time order
/// and the small-user rules (1 → train only, 2 → train + test).
pub fn validate_split(original: &[Interaction], split: &SplitDataset) -> Result<()> {
    if split.len() != original.len() {
        return Err(Error::validation(format!(
            "split holds {} interactions, original has {}",
            split.len(),
            original.len()
        )));
    }
    let mut remaining: HashMap<(&str, &str), &Interaction> =
        original.iter().map(|i| (i.key(), i)).collect();
    if remaining.len() != original.len() {
        return Err(Error::validation("original interactions repeat a (user, item) pair"));
    }

    #[derive(Default)]
    struct UserParts {
        train: Vec<(i64, String)>,
        val: Vec<(i64, String)>,
        test: Vec<(i64, String)>,
    }
    let mut users: BTreeMap<&str, UserParts> = BTreeMap::new();
    for (name, list) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        for it in list {
            match remaining.remove(&it.key()) {
                Some(orig) if orig == it => {}
                Some(_) => {
                    return Err(Error::validation(format!(
                        "{name} entry ({}, {}) differs from the original",
                        it.user, it.item
                    )))
                }
                None => {
                    return Err(Error::validation(format!(
                        "{name} entry ({}, {}) is unknown or appears twice",
                        it.user, it.item
                    )))
                }
            }
            let u = users.entry(&it.user).or_default();
            let slot = match name {
                "train" => &mut u.train,
                "validation" => &mut u.val,
                _ => &mut u.test,
            };
            slot.push((it.timestamp, it.item.clone()));
        }
    }

    for (user, p) in &users {
        let n = p.train.len() + p.val.len() + p.test.len();
        let (want_val, want_test) = match n {
            1 => (0, 0),
            2 => (0, 1),
            _ => (1, 1),
        };
        if p.val.len() != want_val || p.test.len() != want_test {
            return Err(Error::validation(format!(
                "user {user} with {n} interactions has {} validation / {} test entries",
                p.val.len(),
                p.test.len()
            )));
        }
        let max_train = p.train.iter().max();
        let val = p.val.first();
        let test = p.test.first();
        let ordered = match (max_train, val, test) {
            (Some(t), Some(v), _) if t > v => false,
            (_, Some(v), Some(x)) if v > x => false,
            (Some(t), None, Some(x)) if t > x => false,
            _ => true,
        };
        if !ordered {
            return Err(Error::validation(format!(
                "user {user}: split violates temporal order"
            )));
        }
    }
    Ok(())
}
