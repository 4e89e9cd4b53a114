//! Signed engagement storage.
//!
//! Events are ingested once, merged, and indexed four ways (user side and
//! item side, each split by polarity). After [`StoreBuilder::build`] the
//! store is immutable and can be shared freely across threads; every
//! query below is a read.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{HcfError, Result};

/// Whether an entity is a user or a content item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    User,
    Item,
}

/// Dense, per-kind entity identifier. Ids are assigned in encounter order
/// at ingest time; a given external key always maps to the same id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityId {
    pub kind: EntityKind,
    pub index: u32,
}

impl EntityId {
    pub fn user(index: u32) -> Self {
        EntityId { kind: EntityKind::User, index }
    }

    pub fn item(index: u32) -> Self {
        EntityId { kind: EntityKind::Item, index }
    }
}

/// Engagement direction: explicit or implicit thumbs-up vs thumbs-down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    /// The +1/-1 encoding used by the file formats.
    pub fn signum(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn from_signum(value: i64) -> Option<Self> {
        match value {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }
}

/// One merged (user, item, polarity) interaction record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementEvent {
    pub user: EntityId,
    pub item: EntityId,
    pub polarity: Polarity,
    /// Strictly positive; duplicate rows merge by summing weights.
    pub weight: f64,
    /// Epoch seconds; 0 when the source had none. Earliest wins on merge.
    pub timestamp: i64,
}

/// Which space a characteristic vector lives in: item profiles are indexed
/// by users, user profiles by items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    ByUsers,
    ByItems,
}

impl Axis {
    pub fn counterpart_kind(self) -> EntityKind {
        match self {
            Axis::ByUsers => EntityKind::User,
            Axis::ByItems => EntityKind::Item,
        }
    }
}

/// Single-polarity sparse profile of one entity: the counterpart entities
/// it engaged with (or that engaged with it) and their merged weights.
/// Entries are sorted by counterpart index, which fixes the floating-point
/// summation order for all downstream dot products.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicVector {
    pub owner: EntityId,
    pub axis: Axis,
    pub polarity: Polarity,
    /// (counterpart index, merged weight), ascending by index, weights > 0.
    pub entries: Vec<(u32, f64)>,
}

impl CharacteristicVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Euclidean norm, summed in ascending-index order.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn counterparts(&self) -> impl Iterator<Item = (EntityId, f64)> + '_ {
        let kind = self.axis.counterpart_kind();
        self.entries.iter().map(move |&(i, w)| (EntityId { kind, index: i }, w))
    }
}

type AdjacencyRow = Vec<(u32, f64)>;

/// Immutable, indexed collection of engagement events.
#[derive(Debug, Clone)]
pub struct EngagementStore {
    events: Vec<EngagementEvent>,
    user_keys: Vec<String>,
    item_keys: Vec<String>,
    user_ids: HashMap<String, u32>,
    item_ids: HashMap<String, u32>,
    // user index -> [(item index, weight)], sorted by item index
    user_pos: Vec<AdjacencyRow>,
    user_neg: Vec<AdjacencyRow>,
    // item index -> [(user index, weight)], sorted by user index
    item_pos: Vec<AdjacencyRow>,
    item_neg: Vec<AdjacencyRow>,
    // Euclidean norms of the rows above, same indexing
    user_pos_norm: Vec<f64>,
    user_neg_norm: Vec<f64>,
    item_pos_norm: Vec<f64>,
    item_neg_norm: Vec<f64>,
}

impl EngagementStore {
    pub fn n_users(&self) -> usize {
        self.user_keys.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_keys.len()
    }

    /// Merged events in canonical (user, item, polarity) order.
    pub fn events(&self) -> &[EngagementEvent] {
        &self.events
    }

    pub fn n_events(&self, polarity: Polarity) -> usize {
        self.events.iter().filter(|e| e.polarity == polarity).count()
    }

    pub fn user_key(&self, index: u32) -> Option<&str> {
        self.user_keys.get(index as usize).map(String::as_str)
    }

    pub fn item_key(&self, index: u32) -> Option<&str> {
        self.item_keys.get(index as usize).map(String::as_str)
    }

    pub fn key_of(&self, id: EntityId) -> Option<&str> {
        match id.kind {
            EntityKind::User => self.user_key(id.index),
            EntityKind::Item => self.item_key(id.index),
        }
    }

    pub fn lookup_user(&self, key: &str) -> Option<EntityId> {
        self.user_ids.get(key).map(|&i| EntityId::user(i))
    }

    pub fn lookup_item(&self, key: &str) -> Option<EntityId> {
        self.item_ids.get(key).map(|&i| EntityId::item(i))
    }

    pub fn contains(&self, id: EntityId) -> bool {
        let n = match id.kind {
            EntityKind::User => self.n_users(),
            EntityKind::Item => self.n_items(),
        };
        (id.index as usize) < n
    }

    fn check_known(&self, id: EntityId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(HcfError::UnknownEntity(id))
        }
    }

    fn adjacency(&self, owner: EntityId, polarity: Polarity) -> &AdjacencyRow {
        match (owner.kind, polarity) {
            (EntityKind::User, Polarity::Positive) => &self.user_pos[owner.index as usize],
            (EntityKind::User, Polarity::Negative) => &self.user_neg[owner.index as usize],
            (EntityKind::Item, Polarity::Positive) => &self.item_pos[owner.index as usize],
            (EntityKind::Item, Polarity::Negative) => &self.item_neg[owner.index as usize],
        }
    }

    /// The entity's single-polarity sparse profile (the `u_i` fed into the
    /// cosine similarity).
    pub fn characteristic_vector(
        &self,
        owner: EntityId,
        polarity: Polarity,
    ) -> Result<CharacteristicVector> {
        self.check_known(owner)?;
        let axis = match owner.kind {
            EntityKind::User => Axis::ByItems,
            EntityKind::Item => Axis::ByUsers,
        };
        Ok(CharacteristicVector {
            owner,
            axis,
            polarity,
            entries: self.adjacency(owner, polarity).clone(),
        })
    }

    /// Borrowed view of the entity's single-polarity profile:
    /// (counterpart index, merged weight), ascending by index.
    pub fn profile(&self, owner: EntityId, polarity: Polarity) -> Result<&[(u32, f64)]> {
        self.check_known(owner)?;
        Ok(self.adjacency(owner, polarity))
    }

    /// Euclidean norm of the profile, cached at build time with the same
    /// ascending summation order as [`CharacteristicVector::norm`].
    pub fn profile_norm(&self, owner: EntityId, polarity: Polarity) -> Result<f64> {
        self.check_known(owner)?;
        let norms = match (owner.kind, polarity) {
            (EntityKind::User, Polarity::Positive) => &self.user_pos_norm,
            (EntityKind::User, Polarity::Negative) => &self.user_neg_norm,
            (EntityKind::Item, Polarity::Positive) => &self.item_pos_norm,
            (EntityKind::Item, Polarity::Negative) => &self.item_neg_norm,
        };
        Ok(norms[owner.index as usize])
    }

    /// Merged engagements of `owner` at `polarity`, sorted by counterpart id.
    pub fn history(&self, owner: EntityId, polarity: Polarity) -> Result<Vec<(EntityId, f64)>> {
        self.check_known(owner)?;
        let kind = match owner.kind {
            EntityKind::User => EntityKind::Item,
            EntityKind::Item => EntityKind::User,
        };
        Ok(self
            .adjacency(owner, polarity)
            .iter()
            .map(|&(i, w)| (EntityId { kind, index: i }, w))
            .collect())
    }

    /// Number of merged events involving `owner`, across both polarities.
    pub fn event_count(&self, owner: EntityId) -> Result<usize> {
        self.check_known(owner)?;
        Ok(self.adjacency(owner, Polarity::Positive).len()
            + self.adjacency(owner, Polarity::Negative).len())
    }

    /// Total positive engagement weight on `owner`'s side of the ledger:
    /// weight received for items, weight given for users. Drives the
    /// popularity fallback.
    pub fn positive_weight(&self, owner: EntityId) -> Result<f64> {
        self.check_known(owner)?;
        Ok(self.adjacency(owner, Polarity::Positive).iter().map(|&(_, w)| w).sum())
    }

    /// A new store over the same entity universe (identical key/id maps)
    /// built from a different event list. Ids in `events` must be in range.
    pub fn rebuild(&self, events: Vec<EngagementEvent>) -> Result<EngagementStore> {
        let mut builder = StoreBuilder::with_universe(self.user_keys.clone(), self.item_keys.clone());
        for event in events {
            builder.push(event.user, event.item, event.polarity, event.weight, event.timestamp)?;
        }
        Ok(builder.build())
    }

    /// The store plus additional events (dissemination response injection).
    pub fn with_events(&self, extra: &[EngagementEvent]) -> Result<EngagementStore> {
        let mut events = self.events.clone();
        events.extend_from_slice(extra);
        self.rebuild(events)
    }
}

/// Single-writer accumulation stage; `build` freezes into an immutable store.
#[derive(Debug, Default)]
pub struct StoreBuilder {
    user_keys: Vec<String>,
    item_keys: Vec<String>,
    user_ids: HashMap<String, u32>,
    item_ids: HashMap<String, u32>,
    // (user, item, polarity) -> (summed weight, earliest timestamp)
    merged: BTreeMap<(u32, u32, Polarity), (f64, i64)>,
}

impl StoreBuilder {
    pub fn new() -> Self {
        StoreBuilder::default()
    }

    /// A builder whose entity universe is fixed up front. Useful when ids
    /// must line up with an external table (ground truth vectors, an
    /// existing store).
    pub fn with_universe(user_keys: Vec<String>, item_keys: Vec<String>) -> Self {
        let user_ids = user_keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i as u32))
            .collect();
        let item_ids = item_keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i as u32))
            .collect();
        StoreBuilder { user_keys, item_keys, user_ids, item_ids, merged: BTreeMap::new() }
    }

    /// Interns an external user key, allocating the next dense id on first
    /// encounter.
    pub fn user_id(&mut self, key: &str) -> EntityId {
        if let Some(&i) = self.user_ids.get(key) {
            return EntityId::user(i);
        }
        let i = self.user_keys.len() as u32;
        self.user_keys.push(key.to_string());
        self.user_ids.insert(key.to_string(), i);
        EntityId::user(i)
    }

    pub fn item_id(&mut self, key: &str) -> EntityId {
        if let Some(&i) = self.item_ids.get(key) {
            return EntityId::item(i);
        }
        let i = self.item_keys.len() as u32;
        self.item_keys.push(key.to_string());
        self.item_ids.insert(key.to_string(), i);
        EntityId::item(i)
    }

    pub fn push(
        &mut self,
        user: EntityId,
        item: EntityId,
        polarity: Polarity,
        weight: f64,
        timestamp: i64,
    ) -> Result<()> {
        if user.kind != EntityKind::User || item.kind != EntityKind::Item {
            return Err(HcfError::ContractViolation(format!(
                "event must pair a user with an item, got {:?} / {:?}",
                user.kind, item.kind
            )));
        }
        if (user.index as usize) >= self.user_keys.len()
            || (item.index as usize) >= self.item_keys.len()
        {
            return Err(HcfError::UnknownEntity(if (user.index as usize) >= self.user_keys.len() {
                user
            } else {
                item
            }));
        }
        if weight <= 0.0 || !weight.is_finite() {
            return Err(HcfError::ContractViolation(format!(
                "event weight must be a positive finite number, got {weight}"
            )));
        }
        let entry = self
            .merged
            .entry((user.index, item.index, polarity))
            .or_insert((0.0, timestamp));
        entry.0 += weight;
        entry.1 = entry.1.min(timestamp);
        Ok(())
    }

    /// Interns both keys then records the event.
    pub fn push_keys(
        &mut self,
        user_key: &str,
        item_key: &str,
        polarity: Polarity,
        weight: f64,
        timestamp: i64,
    ) -> Result<()> {
        let user = self.user_id(user_key);
        let item = self.item_id(item_key);
        self.push(user, item, polarity, weight, timestamp)
    }

    pub fn build(self) -> EngagementStore {
        let n_users = self.user_keys.len();
        let n_items = self.item_keys.len();
        let mut user_pos: Vec<AdjacencyRow> = vec![Vec::new(); n_users];
        let mut user_neg: Vec<AdjacencyRow> = vec![Vec::new(); n_users];
        let mut item_pos: Vec<AdjacencyRow> = vec![Vec::new(); n_items];
        let mut item_neg: Vec<AdjacencyRow> = vec![Vec::new(); n_items];
        let mut events = Vec::with_capacity(self.merged.len());

        // BTreeMap iteration gives canonical (user, item, polarity) order,
        // so adjacency rows come out sorted by construction.
        for (&(u, i, polarity), &(weight, timestamp)) in &self.merged {
            events.push(EngagementEvent {
                user: EntityId::user(u),
                item: EntityId::item(i),
                polarity,
                weight,
                timestamp,
            });
            match polarity {
                Polarity::Positive => {
                    user_pos[u as usize].push((i, weight));
                    item_pos[i as usize].push((u, weight));
                }
                Polarity::Negative => {
                    user_neg[u as usize].push((i, weight));
                    item_neg[i as usize].push((u, weight));
                }
            }
        }
        for row in item_pos.iter_mut().chain(item_neg.iter_mut()) {
            row.sort_unstable_by_key(|&(u, _)| u);
        }
        // user-side rows are already sorted by item (BTreeMap key order).

        let norm = |rows: &[AdjacencyRow]| -> Vec<f64> {
            rows.iter().map(|row| row.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()).collect()
        };
        let user_pos_norm = norm(&user_pos);
        let user_neg_norm = norm(&user_neg);
        let item_pos_norm = norm(&item_pos);
        let item_neg_norm = norm(&item_neg);

        EngagementStore {
            events,
            user_keys: self.user_keys,
            item_keys: self.item_keys,
            user_ids: self.user_ids,
            item_ids: self.item_ids,
            user_pos,
            user_neg,
            item_pos,
            item_neg,
            user_pos_norm,
            user_neg_norm,
            item_pos_norm,
            item_neg_norm,
        }
    }
}
