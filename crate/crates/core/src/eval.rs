//! Ranking evaluation: ROC-AUC over held-out events under three
//! scenarios.
//!
//! * `reco-all`  — any event may be held out; item ranking for users.
//! * `reco-new`  — only events of users with a short history; the
//!   cold-start case where dislike signal should pay off.
//! * `dism-new`  — only events on items with a short history; user
//!   ranking for items.
//!
//! A split holds out a per-polarity fraction of the eligible events
//! (stratified so both labels are present), the two model variants are
//! trained on what remains, and both score the same held-out events.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HcfError, Result};
use crate::fm::{encode, Direction, FmModel, Variant};
use crate::store::{EngagementEvent, EngagementStore, Polarity};
use crate::train::{train, TrainConfig};

/// A prediction paired with its true label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledScore {
    pub score: f64,
    pub label: bool,
}

/// Area under the ROC curve by midrank statistics: tied scores share the
/// average of their rank range, so a tie between a positive and a negative
/// counts half. Undefined (an error) when either class is absent or any
/// score is non-finite.
pub fn auc(scores: &[LabeledScore]) -> Result<f64> {
    if scores.iter().any(|s| !s.score.is_finite()) {
        return Err(HcfError::UndefinedMetric("non-finite score".into()));
    }
    let positives = scores.iter().filter(|s| s.label).count();
    let negatives = scores.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(HcfError::UndefinedMetric(format!(
            "AUC needs both classes, got {positives} positive / {negatives} negative"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[a].score.partial_cmp(&scores[b].score).expect("scores are finite")
    });

    // Sum of positive midranks; every midrank is a multiple of 0.5, so the
    // accumulation below is exact in f64 at any realistic test size.
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]].score == scores[order[i]].score {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if scores[idx].label {
                positive_rank_sum += midrank;
            }
        }
        i = j;
    }

    let p = positives as f64;
    let n = negatives as f64;
    let u_statistic = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u_statistic / (p * n))
}

/// Which slice of events may be held out, and what gets ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    #[serde(rename = "reco-all")]
    RecoAll,
    #[serde(rename = "reco-new")]
    RecoNew,
    #[serde(rename = "dism-new")]
    DismNew,
}

impl ScenarioKind {
    pub fn direction(self) -> Direction {
        match self {
            ScenarioKind::RecoAll | ScenarioKind::RecoNew => Direction::Recommendation,
            ScenarioKind::DismNew => Direction::Dissemination,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::RecoAll => "reco-all",
            ScenarioKind::RecoNew => "reco-new",
            ScenarioKind::DismNew => "dism-new",
        }
    }
}

/// A fully specified evaluation setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Per-polarity fraction of eligible events held out (0, 1) exclusive.
    pub holdout_fraction: f64,
    /// An entity with at most this many events counts as "new".
    pub freshness_cutoff: usize,
    /// Drives the holdout shuffle only.
    pub seed: u64,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, seed: u64) -> Scenario {
        Scenario { kind, holdout_fraction: 0.3, freshness_cutoff: 3, seed }
    }

    fn validate(&self) -> Result<()> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(HcfError::InvalidConfig(format!(
                "holdout_fraction must lie strictly between 0 and 1, got {}",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}

/// Train store plus the events held out of it.
#[derive(Debug)]
pub struct EvalSplit {
    pub train: EngagementStore,
    pub test: Vec<EngagementEvent>,
}

fn infeasible(kind: ScenarioKind, reason: impl Into<String>) -> HcfError {
    HcfError::InfeasibleScenario { scenario: kind.name().to_string(), reason: reason.into() }
}

/// Round-half-away-from-zero holdout count.
fn holdout_count(eligible: usize, fraction: f64) -> usize {
    (eligible as f64 * fraction + 0.5).floor() as usize
}

/// Splits the store per the scenario. Eligibility is decided on the full
/// store (an entity's freshness counts every event it has, held out or
/// not); the holdout is stratified by polarity so the test set always
/// carries both labels.
pub fn split(store: &EngagementStore, scenario: &Scenario) -> Result<EvalSplit> {
    scenario.validate()?;
    let kind = scenario.kind;
    let eligible = |event: &EngagementEvent| -> Result<bool> {
        Ok(match kind {
            ScenarioKind::RecoAll => true,
            ScenarioKind::RecoNew => {
                store.event_count(event.user)? <= scenario.freshness_cutoff
            }
            ScenarioKind::DismNew => {
                store.event_count(event.item)? <= scenario.freshness_cutoff
            }
        })
    };

    let mut eligible_pos = Vec::new();
    let mut eligible_neg = Vec::new();
    for (idx, event) in store.events().iter().enumerate() {
        if eligible(event)? {
            match event.polarity {
                Polarity::Positive => eligible_pos.push(idx),
                Polarity::Negative => eligible_neg.push(idx),
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut held_out = vec![false; store.events().len()];
    for (class, indices) in [("positive", &mut eligible_pos), ("negative", &mut eligible_neg)] {
        let take = holdout_count(indices.len(), scenario.holdout_fraction);
        if take == 0 {
            return Err(infeasible(
                kind,
                format!("no {class} events to hold out ({} eligible)", indices.len()),
            ));
        }
        indices.shuffle(&mut rng);
        for &idx in indices.iter().take(take) {
            held_out[idx] = true;
        }
    }

    let mut train_events = Vec::new();
    let mut test = Vec::new();
    for (idx, &event) in store.events().iter().enumerate() {
        if held_out[idx] {
            test.push(event);
        } else {
            train_events.push(event);
        }
    }
    if train_events.is_empty() {
        return Err(infeasible(kind, "every event was held out; nothing left to train on"));
    }
    Ok(EvalSplit { train: store.rebuild(train_events)?, test })
}

/// Scores held-out events against the training store: the model sees each
/// event's target history as of training time, never the event itself.
pub fn score_events(
    model: &FmModel,
    train_store: &EngagementStore,
    events: &[EngagementEvent],
) -> Result<Vec<LabeledScore>> {
    events
        .iter()
        .map(|event| {
            let (target, counterpart) = match model.direction {
                Direction::Recommendation => (event.user, event.item),
                Direction::Dissemination => (event.item, event.user),
            };
            let x = encode(train_store, &model.index, model.variant, target, counterpart, None)?;
            Ok(LabeledScore {
                score: model.score(&x),
                label: event.polarity == Polarity::Positive,
            })
        })
        .collect()
}

/// Head-to-head result of the two variants on one scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: ScenarioKind,
    pub split_seed: u64,
    pub train_seed: u64,
    pub n_train_events: usize,
    pub n_test_events: usize,
    pub auc_ccf: f64,
    pub auc_hcf: f64,
    /// Heterogeneous AUC as a percentage of the homogeneous baseline.
    pub relative_pct: f64,
}

/// Splits once, trains both variants on the identical remainder (same
/// seed, same hyperparameters), scores the identical test set.
pub fn evaluate_pair(
    store: &EngagementStore,
    scenario: &Scenario,
    config: &TrainConfig,
    train_seed: u64,
) -> Result<EvalReport> {
    let split = split(store, scenario)?;
    let direction = scenario.kind.direction();
    let (ccf, _) = train(&split.train, Variant::Ccf, direction, config, train_seed)?;
    let (hcf, _) = train(&split.train, Variant::Hcf, direction, config, train_seed)?;
    let auc_ccf = auc(&score_events(&ccf, &split.train, &split.test)?)?;
    let auc_hcf = auc(&score_events(&hcf, &split.train, &split.test)?)?;
    if auc_ccf == 0.0 {
        return Err(HcfError::UndefinedMetric(
            "relative comparison against a zero baseline AUC".into(),
        ));
    }
    Ok(EvalReport {
        scenario: scenario.kind,
        split_seed: scenario.seed,
        train_seed,
        n_train_events: split.train.events().len(),
        n_test_events: split.test.len(),
        auc_ccf,
        auc_hcf,
        relative_pct: 100.0 * auc_hcf / auc_ccf,
    })
}
