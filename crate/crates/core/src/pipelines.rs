//! The two serving pipelines.
//!
//! Both run the same two stages: similarity retrieval proposes a
//! candidate pool, the factorization machine ranks it.
//!
//! * Recommendation: for a user, pool items near the user's liked items
//!   (homogeneous) and items embraced by those who share the user's
//!   dislikes (heterogeneous); rank by predicted engagement.
//! * Dissemination: for an item, pool users near the item's fans and
//!   users whose tastes align with the item's detractors' dislikes; rank;
//!   expose a cohort; fold the observed responses back in and resize the
//!   next cohort by how well the last one landed.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{HcfError, Result};
use crate::fm::{encode, Direction, FmModel, Variant};
use crate::similarity::{heterogeneous_neighbors, homogeneous_neighbors};
use crate::store::{EngagementEvent, EngagementStore, EntityId, Polarity};

/// How a candidate entered the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    FromHomogeneous,
    FromHeterogeneous,
    /// Proposed by both retrieval channels.
    Both,
    /// Injected by the popularity fallback, not by similarity.
    PopularityFallback,
}

impl Provenance {
    pub fn is_heterogeneous(self) -> bool {
        matches!(self, Provenance::FromHeterogeneous | Provenance::Both)
    }
}

/// A pooled candidate before model ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: EntityId,
    /// Best similarity over every seed list that proposed it (popularity
    /// weight when injected by the fallback).
    pub similarity: f64,
    pub provenance: Provenance,
}

/// Retrieval output: candidates sorted by (similarity desc, id asc).
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub target: EntityId,
    pub members: Vec<Candidate>,
    pub used_fallback: bool,
}

/// Retrieval-stage knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidateParams {
    /// Neighbors fetched per seed engagement.
    pub k_per_seed: usize,
    /// Pool size cap after the union.
    pub cap: usize,
    pub use_homogeneous: bool,
    pub use_heterogeneous: bool,
    /// Fill an empty pool with globally popular entities instead of
    /// returning nothing.
    pub popularity_fallback: bool,
}

impl Default for CandidateParams {
    fn default() -> Self {
        CandidateParams {
            k_per_seed: 50,
            cap: 500,
            use_homogeneous: true,
            use_heterogeneous: true,
            popularity_fallback: false,
        }
    }
}

impl CandidateParams {
    /// The homogeneous variant runs without the heterogeneous channel;
    /// everything else stays at the defaults.
    pub fn for_variant(variant: Variant) -> CandidateParams {
        CandidateParams {
            use_heterogeneous: variant == Variant::Hcf,
            ..CandidateParams::default()
        }
    }
}

/// Pools candidates for `target` in the given direction. Entities the
/// target already engaged (either polarity) never appear. An empty pool
/// is a valid outcome unless the popularity fallback is on.
pub fn build_candidates(
    store: &EngagementStore,
    target: EntityId,
    direction: Direction,
    params: &CandidateParams,
) -> Result<CandidateSet> {
    if target.kind != direction.target_kind() {
        return Err(HcfError::ContractViolation(format!(
            "{direction:?} targets a {:?}, got {:?}",
            direction.target_kind(),
            target.kind
        )));
    }
    let engaged: BTreeSet<u32> = store
        .history(target, Polarity::Positive)?
        .into_iter()
        .chain(store.history(target, Polarity::Negative)?)
        .map(|(id, _)| id.index)
        .collect();

    // candidate index -> (best similarity, seen homogeneous, seen heterogeneous)
    let mut pool: BTreeMap<u32, (f64, bool, bool)> = BTreeMap::new();
    let mut absorb = |list: crate::similarity::NeighborList, heterogeneous: bool| {
        for score in list.neighbors {
            if engaged.contains(&score.candidate.index) {
                continue;
            }
            let entry = pool.entry(score.candidate.index).or_insert((score.value, false, false));
            entry.0 = entry.0.max(score.value);
            if heterogeneous {
                entry.2 = true;
            } else {
                entry.1 = true;
            }
        }
    };

    if params.use_homogeneous {
        for (seed, _) in store.history(target, Polarity::Positive)? {
            absorb(
                homogeneous_neighbors(store, seed, Polarity::Positive, params.k_per_seed)?,
                false,
            );
        }
    }
    if params.use_heterogeneous {
        for (seed, _) in store.history(target, Polarity::Negative)? {
            absorb(heterogeneous_neighbors(store, seed, params.k_per_seed)?, true);
        }
    }

    let candidate_kind = direction.candidate_kind();
    let mut members: Vec<Candidate> = pool
        .into_iter()
        .map(|(index, (similarity, homo, hetero))| Candidate {
            id: EntityId { kind: candidate_kind, index },
            similarity,
            provenance: match (homo, hetero) {
                (true, true) => Provenance::Both,
                (false, true) => Provenance::FromHeterogeneous,
                _ => Provenance::FromHomogeneous,
            },
        })
        .collect();
    members.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .expect("similarities are finite")
            .then(a.id.index.cmp(&b.id.index))
    });
    members.truncate(params.cap);

    let mut used_fallback = false;
    if members.is_empty() && params.popularity_fallback {
        used_fallback = true;
        let count = match candidate_kind {
            crate::store::EntityKind::User => store.n_users(),
            crate::store::EntityKind::Item => store.n_items(),
        };
        let mut by_weight: Vec<Candidate> = (0..count as u32)
            .filter(|index| !engaged.contains(index) && *index != target.index)
            .map(|index| {
                let id = EntityId { kind: candidate_kind, index };
                Ok(Candidate {
                    id,
                    similarity: store.positive_weight(id)?,
                    provenance: Provenance::PopularityFallback,
                })
            })
            .collect::<Result<_>>()?;
        by_weight.sort_by(|a, b| {
            b.similarity
                .partial_cmp(&a.similarity)
                .expect("weights are finite")
                .then(a.id.index.cmp(&b.id.index))
        });
        by_weight.truncate(params.cap);
        members = by_weight;
    }

    Ok(CandidateSet { target, members, used_fallback })
}

/// A model-ranked entity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    pub id: EntityId,
    /// Model prediction (a probability under the logistic link).
    pub score: f64,
    pub provenance: Provenance,
}

/// Ranking-stage knobs for recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoParams {
    /// List length returned to the caller.
    pub top_n: usize,
    pub candidates: CandidateParams,
    /// Minimum fraction of the final list drawn from heterogeneous
    /// retrieval, when that channel proposed enough candidates.
    pub hetero_quota: Option<f64>,
}

impl Default for RecoParams {
    fn default() -> Self {
        RecoParams { top_n: 10, candidates: CandidateParams::default(), hetero_quota: None }
    }
}

/// A finished recommendation list.
#[derive(Debug, Clone)]
pub struct Recommendation {
    pub target: EntityId,
    pub items: Vec<Ranked>,
    pub used_fallback: bool,
}

fn rank_candidates(
    store: &EngagementStore,
    model: &FmModel,
    target: EntityId,
    members: &[Candidate],
) -> Result<Vec<Ranked>> {
    let mut ranked = members
        .iter()
        .map(|c| {
            let x = encode(store, &model.index, model.variant, target, c.id, None)?;
            Ok(Ranked { id: c.id, score: model.score(&x), provenance: c.provenance })
        })
        .collect::<Result<Vec<Ranked>>>()?;
    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("model scores are finite")
            .then(a.id.index.cmp(&b.id.index))
    });
    Ok(ranked)
}

fn check_model_direction(model: &FmModel, direction: Direction) -> Result<()> {
    if model.direction != direction {
        return Err(HcfError::ContractViolation(format!(
            "model was trained for {:?}, pipeline needs {direction:?}",
            model.direction
        )));
    }
    Ok(())
}

/// Retrieval then ranking for one user. An empty pool yields an empty
/// list (unless the fallback is enabled in `params.candidates`).
pub fn recommend(
    store: &EngagementStore,
    model: &FmModel,
    target: EntityId,
    params: &RecoParams,
) -> Result<Recommendation> {
    check_model_direction(model, Direction::Recommendation)?;
    if let Some(q) = params.hetero_quota {
        if !(0.0..=1.0).contains(&q) {
            return Err(HcfError::InvalidConfig(format!(
                "hetero_quota must lie in [0, 1], got {q}"
            )));
        }
    }
    let pool = build_candidates(store, target, Direction::Recommendation, &params.candidates)?;
    let ranked = rank_candidates(store, model, target, &pool.members)?;

    let mut selected: Vec<Ranked> = ranked.iter().copied().take(params.top_n).collect();
    if let Some(quota) = params.hetero_quota {
        let required = ((quota * selected.len() as f64).ceil() as usize).min(selected.len());
        let mut have = selected.iter().filter(|r| r.provenance.is_heterogeneous()).count();
        if have < required {
            let reserve: Vec<Ranked> = ranked
                .iter()
                .filter(|r| {
                    r.provenance.is_heterogeneous()
                        && !selected.iter().any(|s| s.id == r.id)
                })
                .copied()
                .collect();
            let mut reserve = reserve.into_iter();
            // Swap out the lowest-ranked homogeneous picks for the best
            // unused heterogeneous ones until the quota holds or the
            // reserve runs dry.
            for slot in (0..selected.len()).rev() {
                if have >= required {
                    break;
                }
                if selected[slot].provenance.is_heterogeneous() {
                    continue;
                }
                match reserve.next() {
                    Some(replacement) => {
                        selected[slot] = replacement;
                        have += 1;
                    }
                    None => break,
                }
            }
            selected.sort_by(|a, b| {
                b.score
                    .partial_cmp(&a.score)
                    .expect("model scores are finite")
                    .then(a.id.index.cmp(&b.id.index))
            });
        }
    }
    Ok(Recommendation { target, items: selected, used_fallback: pool.used_fallback })
}

/// Dissemination loop knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DismParams {
    pub initial_cohort: usize,
    pub max_iterations: usize,
    /// Last-batch positive rate at or above this doubles the next cohort.
    pub grow_threshold: f64,
    pub grow_factor: f64,
    /// Last-batch positive rate below this halves the next cohort.
    pub shrink_threshold: f64,
    pub shrink_factor: f64,
    pub candidates: CandidateParams,
}

impl Default for DismParams {
    fn default() -> Self {
        DismParams {
            initial_cohort: 10,
            max_iterations: 8,
            grow_threshold: 0.5,
            grow_factor: 2.0,
            shrink_threshold: 0.2,
            shrink_factor: 0.5,
            candidates: CandidateParams::default(),
        }
    }
}

impl DismParams {
    fn validate(&self) -> Result<()> {
        if self.initial_cohort == 0 {
            return Err(HcfError::InvalidConfig("initial_cohort must be at least 1".into()));
        }
        if self.grow_factor < 1.0 || self.shrink_factor <= 0.0 || self.shrink_factor > 1.0 {
            return Err(HcfError::InvalidConfig(format!(
                "cohort factors out of range: grow {} shrink {}",
                self.grow_factor, self.shrink_factor
            )));
        }
        Ok(())
    }

    /// Next cohort size given how the last batch landed. Growth rounds
    /// up, shrinkage rounds down but never below one.
    pub fn adjust_cohort_size(&self, size: usize, positive_rate: f64) -> usize {
        if positive_rate >= self.grow_threshold {
            (size as f64 * self.grow_factor).ceil() as usize
        } else if positive_rate < self.shrink_threshold {
            ((size as f64 * self.shrink_factor).floor() as usize).max(1)
        } else {
            size
        }
    }
}

/// One exposure round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// External keys of the users exposed this round.
    pub cohort: Vec<String>,
    pub positive_rate: f64,
    pub cohort_size: usize,
}

/// Loop outcome: the per-iteration trail plus aggregate response counts.
#[derive(Debug, Clone)]
pub struct DisseminationRun {
    pub item: EntityId,
    pub records: Vec<IterationRecord>,
    pub total_exposed: usize,
    pub total_positive: usize,
    /// True when the loop ended because the candidate pool ran dry.
    pub stalled: bool,
}

impl DisseminationRun {
    /// Positive responses over everyone exposed, across all iterations.
    pub fn cumulative_positive_rate(&self) -> f64 {
        if self.total_exposed == 0 {
            0.0
        } else {
            self.total_positive as f64 / self.total_exposed as f64
        }
    }
}

/// Picks the next cohort for `item`: pool candidates on the current
/// store, drop already-exposed users, rank with the model, take `size`.
pub fn select_cohort(
    store: &EngagementStore,
    model: &FmModel,
    item: EntityId,
    exposed: &BTreeSet<u32>,
    size: usize,
    params: &CandidateParams,
) -> Result<Vec<EntityId>> {
    check_model_direction(model, Direction::Dissemination)?;
    let pool = build_candidates(store, item, Direction::Dissemination, params)?;
    let fresh: Vec<Candidate> = pool
        .members
        .into_iter()
        .filter(|c| !exposed.contains(&c.id.index))
        .collect();
    let ranked = rank_candidates(store, model, item, &fresh)?;
    Ok(ranked.into_iter().take(size).map(|r| r.id).collect())
}

/// Runs the exposure loop. `respond` maps an exposed cohort to signed
/// reactions; each reaction is folded into the working store before the
/// next round, so retrieval and ranking see the item's growing history.
/// The loop ends after `max_iterations` or as soon as no exposable
/// candidate remains.
pub fn run_dissemination(
    store: &EngagementStore,
    model: &FmModel,
    item: EntityId,
    params: &DismParams,
    mut respond: impl FnMut(&[EntityId]) -> Vec<(EntityId, Polarity)>,
) -> Result<DisseminationRun> {
    check_model_direction(model, Direction::Dissemination)?;
    params.validate()?;
    if !store.contains(item) {
        return Err(HcfError::UnknownEntity(item));
    }

    let mut working = store.clone();
    let mut exposed: BTreeSet<u32> = BTreeSet::new();
    let mut records = Vec::new();
    let mut cohort_size = params.initial_cohort;
    let mut total_positive = 0;
    let mut stalled = false;

    for iteration in 0..params.max_iterations {
        let cohort =
            select_cohort(&working, model, item, &exposed, cohort_size, &params.candidates)?;
        if cohort.is_empty() {
            stalled = true;
            break;
        }
        exposed.extend(cohort.iter().map(|id| id.index));

        let reactions = respond(&cohort);
        let positives = reactions.iter().filter(|(_, p)| *p == Polarity::Positive).count();
        total_positive += positives;
        let positive_rate = positives as f64 / cohort.len() as f64;

        let injected: Vec<EngagementEvent> = reactions
            .iter()
            .map(|&(user, polarity)| EngagementEvent {
                user,
                item,
                polarity,
                weight: 1.0,
                timestamp: iteration as i64,
            })
            .collect();
        working = working.with_events(&injected)?;

        records.push(IterationRecord {
            iteration,
            cohort: cohort
                .iter()
                .map(|id| working.key_of(*id).expect("cohort user is interned").to_string())
                .collect(),
            positive_rate,
            cohort_size: cohort.len(),
        });
        cohort_size = params.adjust_cohort_size(cohort_size, positive_rate);
    }

    Ok(DisseminationRun {
        item,
        records,
        total_exposed: exposed.len(),
        total_positive,
        stalled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fm::{FeatureIndex, Link};
    use crate::store::StoreBuilder;

    /// Four users, eight items (same map as the similarity tests):
    ///   u0: +i0 +i1 -i2      u1: +i0 +i1 +i3
    ///   u2: +i2 +i4 +i6 -i7  u3: -i2 +i3 +i5
    fn reco_fixture() -> EngagementStore {
        let mut b = StoreBuilder::new();
        for key in ["u0", "u1", "u2", "u3"] {
            b.user_id(key);
        }
        for n in 0..8 {
            b.item_id(&format!("i{n}"));
        }
        let rows: &[(&str, &str, i64)] = &[
            ("u0", "i0", 1),
            ("u0", "i1", 1),
            ("u0", "i2", -1),
            ("u1", "i0", 1),
            ("u1", "i1", 1),
            ("u1", "i3", 1),
            ("u2", "i2", 1),
            ("u2", "i4", 1),
            ("u2", "i6", 1),
            ("u2", "i7", -1),
            ("u3", "i2", -1),
            ("u3", "i3", 1),
            ("u3", "i5", 1),
        ];
        for &(u, i, p) in rows {
            b.push_keys(u, i, Polarity::from_signum(p).unwrap(), 1.0, 0).unwrap();
        }
        b.build()
    }

    fn zero_model(store: &EngagementStore, direction: Direction, variant: Variant) -> FmModel {
        use rand::SeedableRng;
        let index = FeatureIndex::for_store(store, direction);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        FmModel::init(index, variant, Link::Logistic, 2, 0.0, &mut rng).unwrap()
    }

    #[test]
    fn candidate_pool_hand_traced() {
        let store = reco_fixture();
        let params = CandidateParams { k_per_seed: 10, ..CandidateParams::default() };
        let set = build_candidates(
            &store,
            EntityId::user(0),
            Direction::Recommendation,
            &params,
        )
        .unwrap();
        // homogeneous via +i0, +i1 proposes {i1, i3, i0}; heterogeneous via
        // -i2 proposes {i5, i0, i1, i3}; u0's own engagements {i0, i1, i2}
        // drop out, leaving i5 (hetero, 1/sqrt 2) ahead of i3 (both, 0.5).
        assert!(!set.used_fallback);
        let got: Vec<(u32, Provenance)> =
            set.members.iter().map(|c| (c.id.index, c.provenance)).collect();
        assert_eq!(
            got,
            vec![(5, Provenance::FromHeterogeneous), (3, Provenance::Both)]
        );
        assert!((set.members[0].similarity - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((set.members[1].similarity - 0.5).abs() < 1e-12);
    }

    #[test]
    fn per_seed_truncation_happens_before_the_engaged_filter() {
        let store = reco_fixture();
        // k = 3 truncates the heterogeneous list for -i2 to [i5, i0, i1]
        // (0.5 ties resolve by id), so i3 only arrives through the
        // homogeneous channel even though its heterogeneous cosine is 0.5.
        let params = CandidateParams { k_per_seed: 3, ..CandidateParams::default() };
        let set = build_candidates(
            &store,
            EntityId::user(0),
            Direction::Recommendation,
            &params,
        )
        .unwrap();
        let got: Vec<(u32, Provenance)> =
            set.members.iter().map(|c| (c.id.index, c.provenance)).collect();
        assert_eq!(
            got,
            vec![(5, Provenance::FromHeterogeneous), (3, Provenance::FromHomogeneous)]
        );
    }

    #[test]
    fn homogeneous_only_pool_drops_the_heterogeneous_member() {
        let store = reco_fixture();
        let params = CandidateParams {
            k_per_seed: 3,
            use_heterogeneous: false,
            ..CandidateParams::default()
        };
        let set =
            build_candidates(&store, EntityId::user(0), Direction::Recommendation, &params)
                .unwrap();
        let got: Vec<u32> = set.members.iter().map(|c| c.id.index).collect();
        assert_eq!(got, vec![3]);
        assert_eq!(set.members[0].provenance, Provenance::FromHomogeneous);
    }

    #[test]
    fn dissemination_pool_hand_traced() {
        let mut b = StoreBuilder::new();
        let rows: &[(&str, &str, i64)] = &[
            ("u0", "t0", 1),
            ("u0", "m0", 1),
            ("u0", "m1", 1),
            ("u1", "t0", -1),
            ("u1", "m2", -1),
            ("u2", "m0", 1),
            ("u2", "m1", 1),
            ("u3", "m2", 1),
            ("u3", "m3", 1),
            ("u4", "m2", 1),
            ("u4", "m4", 1),
            ("u5", "m4", 1),
            ("u6", "m1", 1),
            ("u7", "m0", -1),
        ];
        for &(u, i, p) in rows {
            b.push_keys(u, i, Polarity::from_signum(p).unwrap(), 1.0, 0).unwrap();
        }
        let store = b.build();
        let item = store.lookup_item("t0").unwrap();
        let params = CandidateParams { k_per_seed: 5, cap: 3, ..CandidateParams::default() };
        let set = build_candidates(&store, item, Direction::Dissemination, &params).unwrap();
        // fans of t0: u0 -> homogeneous {u2, u6}; detractor u1 ->
        // heterogeneous {u3, u4, u0}; engaged {u0, u1} excluded; cap 3
        // keeps u2 (0.816), u6 (0.577), u3 (0.5, id beats u4).
        let got: Vec<&str> =
            set.members.iter().map(|c| store.key_of(c.id).unwrap()).collect();
        assert_eq!(got, vec!["u2", "u6", "u3"]);
    }

    #[test]
    fn empty_pool_is_a_valid_result() {
        let mut b = StoreBuilder::new();
        b.push_keys("u0", "i0", Polarity::Positive, 1.0, 0).unwrap();
        let store = b.build();
        let set = build_candidates(
            &store,
            EntityId::user(0),
            Direction::Recommendation,
            &CandidateParams::default(),
        )
        .unwrap();
        assert!(set.members.is_empty());
        assert!(!set.used_fallback);

        let model = zero_model(&store, Direction::Recommendation, Variant::Hcf);
        let reco =
            recommend(&store, &model, EntityId::user(0), &RecoParams::default()).unwrap();
        assert!(reco.items.is_empty());
    }

    #[test]
    fn popularity_fallback_fills_an_empty_pool() {
        let mut b = StoreBuilder::new();
        // u0 is isolated from everyone else's items.
        b.push_keys("u0", "solo", Polarity::Positive, 1.0, 0).unwrap();
        b.push_keys("u1", "hot", Polarity::Positive, 2.0, 0).unwrap();
        b.push_keys("u2", "hot", Polarity::Positive, 1.0, 0).unwrap();
        b.push_keys("u1", "warm", Polarity::Positive, 1.0, 0).unwrap();
        b.push_keys("u2", "cold", Polarity::Negative, 1.0, 0).unwrap();
        let store = b.build();
        let params = CandidateParams { popularity_fallback: true, ..CandidateParams::default() };
        let set = build_candidates(
            &store,
            EntityId::user(0),
            Direction::Recommendation,
            &params,
        )
        .unwrap();
        assert!(set.used_fallback);
        let got: Vec<&str> = set.members.iter().map(|c| store.key_of(c.id).unwrap()).collect();
        // hot (3.0) > warm (1.0) > cold (0.0, never liked)
        assert_eq!(got, vec!["hot", "warm", "cold"]);
        assert!(set.members.iter().all(|c| c.provenance == Provenance::PopularityFallback));
    }

    #[test]
    fn wrong_direction_target_is_rejected() {
        let store = reco_fixture();
        assert!(build_candidates(
            &store,
            EntityId::item(0),
            Direction::Recommendation,
            &CandidateParams::default(),
        )
        .is_err());
        let model = zero_model(&store, Direction::Dissemination, Variant::Hcf);
        assert!(recommend(&store, &model, EntityId::user(0), &RecoParams::default()).is_err());
    }

    #[test]
    fn zero_model_recommendation_orders_ties_by_id() {
        let store = reco_fixture();
        let model = zero_model(&store, Direction::Recommendation, Variant::Hcf);
        let reco =
            recommend(&store, &model, EntityId::user(0), &RecoParams::default()).unwrap();
        // every score is sigmoid(0) = 0.5, so ranking falls back to ids
        let got: Vec<u32> = reco.items.iter().map(|r| r.id.index).collect();
        assert_eq!(got, vec![3, 5]);
        assert!(reco.items.iter().all(|r| r.score == 0.5));
    }

    #[test]
    fn hetero_quota_swaps_in_heterogeneous_members() {
        // candidates for u0: "c" via the homogeneous channel, "d" via the
        // heterogeneous one, tied under a zero model with c's id lower.
        let mut b = StoreBuilder::new();
        let rows: &[(&str, &str, i64)] = &[
            ("u0", "a", 1),
            ("u0", "b", -1),
            ("u1", "a", 1),
            ("u1", "c", 1),
            ("u2", "b", -1),
            ("u2", "d", 1),
        ];
        for &(u, i, p) in rows {
            b.push_keys(u, i, Polarity::from_signum(p).unwrap(), 1.0, 0).unwrap();
        }
        let store = b.build();
        let model = zero_model(&store, Direction::Recommendation, Variant::Hcf);
        let target = store.lookup_user("u0").unwrap();

        let plain = RecoParams { top_n: 1, ..RecoParams::default() };
        let reco = recommend(&store, &model, target, &plain).unwrap();
        assert_eq!(store.key_of(reco.items[0].id), Some("c"));
        assert_eq!(reco.items[0].provenance, Provenance::FromHomogeneous);

        let quota = RecoParams { top_n: 1, hetero_quota: Some(1.0), ..RecoParams::default() };
        let reco = recommend(&store, &model, target, &quota).unwrap();
        assert_eq!(store.key_of(reco.items[0].id), Some("d"));
        assert_eq!(reco.items[0].provenance, Provenance::FromHeterogeneous);

        let bad = RecoParams { hetero_quota: Some(1.5), ..RecoParams::default() };
        assert!(recommend(&store, &model, target, &bad).is_err());
    }

    #[test]
    fn cohort_size_adjustment_arithmetic() {
        let params = DismParams::default();
        // growth rounds up
        assert_eq!(params.adjust_cohort_size(5, 0.5), 10);
        assert_eq!(params.adjust_cohort_size(5, 1.0), 10);
        assert_eq!(params.adjust_cohort_size(3, 0.75), 6);
        // shrink rounds down, floor of one
        assert_eq!(params.adjust_cohort_size(5, 0.1), 2);
        assert_eq!(params.adjust_cohort_size(1, 0.0), 1);
        // the band between thresholds holds steady
        assert_eq!(params.adjust_cohort_size(7, 0.3), 7);
        assert_eq!(params.adjust_cohort_size(7, 0.49999), 7);
    }

    /// Ten users primed so a zero model exposes them in id order; u0 has
    /// engaged already and must never be exposed.
    fn dism_fixture() -> EngagementStore {
        let mut b = StoreBuilder::new();
        b.push_keys("u0", "t0", Polarity::Positive, 1.0, 0).unwrap();
        for u in 0..10u32 {
            // everyone shares an item with u0 so retrieval can reach them
            b.push_keys(&format!("u{u}"), "m0", Polarity::Positive, 1.0, 0).unwrap();
        }
        b.build()
    }

    #[test]
    fn dissemination_trace_with_scripted_responses() {
        let store = dism_fixture();
        let item = store.lookup_item("t0").unwrap();
        let model = zero_model(&store, Direction::Dissemination, Variant::Hcf);
        let params = DismParams {
            initial_cohort: 2,
            max_iterations: 3,
            ..DismParams::default()
        };
        // iteration 0: all positive (rate 1.0 -> grow to 4)
        // iteration 1: all negative (rate 0.0 -> shrink to 2)
        // iteration 2: whatever remains
        let mut iteration = 0;
        let run = run_dissemination(&store, &model, item, &params, |cohort| {
            let polarity = if iteration == 1 { Polarity::Negative } else { Polarity::Positive };
            iteration += 1;
            cohort.iter().map(|&u| (u, polarity)).collect()
        })
        .unwrap();

        assert_eq!(run.records.len(), 3);
        // zero model scores everyone 0.5; ties resolve by user id, and u0
        // (already engaged) is excluded throughout.
        assert_eq!(run.records[0].cohort, vec!["u1", "u2"]);
        assert_eq!(run.records[0].positive_rate, 1.0);
        assert_eq!(run.records[1].cohort, vec!["u3", "u4", "u5", "u6"]);
        assert_eq!(run.records[1].positive_rate, 0.0);
        assert_eq!(run.records[2].cohort, vec!["u7", "u8"]);
        assert_eq!(run.total_exposed, 8);
        assert_eq!(run.total_positive, 4); // 2, 0, 2 per round
        assert!(!run.stalled);
        assert!((run.cumulative_positive_rate() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dissemination_stalls_when_candidates_run_dry() {
        let store = dism_fixture();
        let item = store.lookup_item("t0").unwrap();
        let model = zero_model(&store, Direction::Dissemination, Variant::Hcf);
        let params = DismParams {
            initial_cohort: 6,
            max_iterations: 10,
            ..DismParams::default()
        };
        let run = run_dissemination(&store, &model, item, &params, |cohort| {
            cohort.iter().map(|&u| (u, Polarity::Positive)).collect()
        })
        .unwrap();
        // 9 exposable users; 6 then 3 exhaust the pool, round 3 stalls.
        assert!(run.stalled);
        assert_eq!(run.records.len(), 2);
        assert_eq!(run.total_exposed, 9);
    }

    #[test]
    fn responses_feed_back_into_retrieval() {
        // u9 shares no item with anyone; until someone who liked an item
        // of u9's appears in t0's history, u9 is unreachable.
        let mut b = StoreBuilder::new();
        b.push_keys("u0", "t0", Polarity::Positive, 1.0, 0).unwrap();
        b.push_keys("u0", "m0", Polarity::Positive, 1.0, 0).unwrap();
        b.push_keys("u1", "m0", Polarity::Positive, 1.0, 0).unwrap();
        b.push_keys("u1", "m1", Polarity::Positive, 1.0, 0).unwrap();
        b.push_keys("u9", "m1", Polarity::Positive, 1.0, 0).unwrap();
        let store = b.build();
        let item = store.lookup_item("t0").unwrap();
        let model = zero_model(&store, Direction::Dissemination, Variant::Hcf);
        let params = DismParams {
            initial_cohort: 1,
            max_iterations: 3,
            ..DismParams::default()
        };
        let run = run_dissemination(&store, &model, item, &params, |cohort| {
            cohort.iter().map(|&u| (u, Polarity::Positive)).collect()
        })
        .unwrap();
        // round 0 reaches u1 (via m0); u1's positive response joins t0's
        // history, which opens the door to u9 (via m1) in round 1.
        assert_eq!(run.records[0].cohort, vec!["u1"]);
        assert!(run.records.len() >= 2);
        assert_eq!(run.records[1].cohort, vec!["u9"]);
    }

    #[test]
    fn dissemination_rejects_bad_setup() {
        let store = dism_fixture();
        let item = store.lookup_item("t0").unwrap();
        let model = zero_model(&store, Direction::Dissemination, Variant::Hcf);
        let zero_cohort = DismParams { initial_cohort: 0, ..DismParams::default() };
        assert!(
            run_dissemination(&store, &model, item, &zero_cohort, |c| c
                .iter()
                .map(|&u| (u, Polarity::Positive))
                .collect())
            .is_err()
        );
        let reco_model = zero_model(&store, Direction::Recommendation, Variant::Hcf);
        assert!(run_dissemination(&store, &reco_model, item, &DismParams::default(), |c| c
            .iter()
            .map(|&u| (u, Polarity::Positive))
            .collect())
        .is_err());
        assert!(run_dissemination(
            &store,
            &model,
            EntityId::item(99),
            &DismParams::default(),
            |c| c.iter().map(|&u| (u, Polarity::Positive)).collect()
        )
        .is_err());
    }
}
