use std::collections::{BTreeMap, BTreeSet};

use super::{Interaction, StatementId};

/// Statement sets per item, per user and overall, each sorted by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UniverseIndex {
    pub by_item: BTreeMap<String, Vec<StatementId>>,
    pub by_user: BTreeMap<String, Vec<StatementId>>,
    pub global: Vec<StatementId>,
}

impl UniverseIndex {
    /// Builds the universes over the given interactions (a split, or the
    /// whole dataset).
    pub fn from_interactions<'a>(interactions: impl IntoIterator<Item = &'a Interaction>) -> Self {
        let mut by_item: BTreeMap<String, BTreeSet<StatementId>> = BTreeMap::new();
        let mut by_user: BTreeMap<String, BTreeSet<StatementId>> = BTreeMap::new();
        let mut global = BTreeSet::new();
        for it in interactions {
            by_item
                .entry(it.item.clone())
                .or_default()
                .extend(&it.statements);
            by_user
                .entry(it.user.clone())
                .or_default()
                .extend(&it.statements);
            global.extend(&it.statements);
        }
        let flat = |m: BTreeMap<String, BTreeSet<StatementId>>| {
            m.into_iter()
                .map(|(k, v)| (k, v.into_iter().collect()))
                .collect()
        };
        UniverseIndex {
            by_item: flat(by_item),
            by_user: flat(by_user),
            global: global.into_iter().collect(),
        }
    }

    pub fn item(&self, item: &str) -> &[StatementId] {
        self.by_item.get(item).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn user(&self, user: &str) -> &[StatementId] {
        self.by_user.get(user).map(Vec::as_slice).unwrap_or(&[])
    }
}
