//! Neighbor retrieval over characteristic vectors.
//!
//! Two entities are compared by the cosine of their single-polarity
//! profiles. A *homogeneous* query compares same-polarity vectors
//! ("liked by the same people"). A *heterogeneous* query compares the
//! seed's negative vector against candidates' positive vectors ("those
//! who rejected the seed embraced the candidate"); that direction is
//! fixed — dislike history is the predictor, liking is the outcome.

use crate::error::Result;
use crate::store::{CharacteristicVector, EngagementStore, EntityId, Polarity};

/// Which pair of polarity profiles a query compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimilarityMode {
    /// Seed and candidate profiles share `polarity`.
    Homogeneous(Polarity),
    /// Seed negative profile vs candidate positive profiles.
    Heterogeneous,
}

impl SimilarityMode {
    pub fn seed_polarity(self) -> Polarity {
        match self {
            SimilarityMode::Homogeneous(p) => p,
            SimilarityMode::Heterogeneous => Polarity::Negative,
        }
    }

    pub fn candidate_polarity(self) -> Polarity {
        match self {
            SimilarityMode::Homogeneous(p) => p,
            SimilarityMode::Heterogeneous => Polarity::Positive,
        }
    }
}

/// A scored neighbor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScore {
    pub candidate: EntityId,
    pub value: f64,
}

/// Top-k neighbors of one seed under one mode, sorted by
/// (value descending, candidate id ascending).
#[derive(Debug, Clone)]
pub struct NeighborList {
    pub seed: EntityId,
    pub mode: SimilarityMode,
    pub neighbors: Vec<SimilarityScore>,
}

/// Cosine of two sparse profiles over the same axis. Zero when either
/// profile is empty (or has zero norm); the merge join accumulates the
/// dot product in ascending counterpart order, matching a dense loop
/// bit for bit.
pub fn cosine(a: &CharacteristicVector, b: &CharacteristicVector) -> Result<f64> {
    if a.axis != b.axis {
        return Err(crate::error::HcfError::ContractViolation(format!(
            "cosine requires profiles over the same axis, got {:?} vs {:?}",
            a.axis, b.axis
        )));
    }
    let mut dot = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < a.entries.len() && j < b.entries.len() {
        let (ia, wa) = a.entries[i];
        let (ib, wb) = b.entries[j];
        match ia.cmp(&ib) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += wa * wb;
                i += 1;
                j += 1;
            }
        }
    }
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / denom)
}

/// Top-k neighbors of `seed` under `mode`. Candidates are discovered
/// through shared counterparts (only entities that co-occur with the seed
/// can have nonzero cosine), scored exactly, and ranked with ties broken
/// by ascending id. An empty seed profile yields an empty list; an
/// unknown seed is an error.
pub fn neighbors(
    store: &EngagementStore,
    seed: EntityId,
    mode: SimilarityMode,
    k: usize,
) -> Result<NeighborList> {
    let seed_profile = store.profile(seed, mode.seed_polarity())?;
    let seed_norm = store.profile_norm(seed, mode.seed_polarity())?;
    let counterpart_kind = match seed.kind {
        crate::store::EntityKind::User => crate::store::EntityKind::Item,
        crate::store::EntityKind::Item => crate::store::EntityKind::User,
    };

    // Scatter-add over counterpart histories. For any one candidate the
    // products arrive in ascending counterpart order — the same order a
    // sparse merge join (or a dense loop) would add them, so the sums
    // are bit-identical to an explicit pairwise cosine. All weights are
    // positive, so a zero slot in the dense scratch means "untouched".
    let n_candidates = match seed.kind {
        crate::store::EntityKind::User => store.n_users(),
        crate::store::EntityKind::Item => store.n_items(),
    };
    let mut dots = vec![0.0f64; n_candidates];
    let mut touched: Vec<u32> = Vec::new();
    for &(counterpart, seed_weight) in seed_profile {
        let counterpart = EntityId { kind: counterpart_kind, index: counterpart };
        for &(candidate, candidate_weight) in store.profile(counterpart, mode.candidate_polarity())? {
            if candidate == seed.index {
                continue;
            }
            let slot = &mut dots[candidate as usize];
            if *slot == 0.0 {
                touched.push(candidate);
            }
            *slot += seed_weight * candidate_weight;
        }
    }

    let mut scored = Vec::with_capacity(touched.len());
    for index in touched {
        let candidate = EntityId { kind: seed.kind, index };
        let denom = seed_norm * store.profile_norm(candidate, mode.candidate_polarity())?;
        let dot = dots[index as usize];
        let value = if denom == 0.0 { 0.0 } else { dot / denom };
        scored.push(SimilarityScore { candidate, value });
    }
    scored.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .expect("similarity values are finite")
            .then(a.candidate.index.cmp(&b.candidate.index))
    });
    scored.truncate(k);
    Ok(NeighborList { seed, mode, neighbors: scored })
}

/// Same-polarity neighbors of `seed`.
pub fn homogeneous_neighbors(
    store: &EngagementStore,
    seed: EntityId,
    polarity: Polarity,
    k: usize,
) -> Result<NeighborList> {
    neighbors(store, seed, SimilarityMode::Homogeneous(polarity), k)
}

/// Neighbors whose positive profile matches the seed's negative profile.
pub fn heterogeneous_neighbors(
    store: &EngagementStore,
    seed: EntityId,
    k: usize,
) -> Result<NeighborList> {
    neighbors(store, seed, SimilarityMode::Heterogeneous, k)
}
