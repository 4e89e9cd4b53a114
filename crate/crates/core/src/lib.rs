//! Heterogeneous collaborative filtering.
//!
//! Most recommenders only ask what someone liked. This crate also asks
//! what they rejected: signed engagement is stored per polarity, a
//! cosine retrieval stage finds "those who disliked what you disliked
//! liked this" candidates alongside the usual taste neighbors, and a
//! factorization machine ranks the pool with both history polarities as
//! features. The same machinery runs in two directions — items for a
//! user (recommendation) and users for an item (dissemination, grown
//! cohort by cohort as reactions stream back in).
//!
//! Module map:
//! * [`store`] — signed engagement storage and characteristic vectors
//! * [`io`] — CSV / JSON-lines event logs
//! * [`similarity`] — cosine neighbor retrieval, both polarity pairings
//! * [`fm`] — factorization machine: features, scoring, persistence
//! * [`train`] — seeded SGD over engagement events
//! * [`pipelines`] — candidate pooling, recommendation, dissemination
//! * [`eval`] — ROC-AUC harness with cold-start scenarios
//! * [`synth`] — seeded synthetic worlds with planted dislike structure

pub mod error;
pub mod eval;
pub mod fm;
pub mod io;
pub mod pipelines;
pub mod similarity;
pub mod store;
pub mod synth;
pub mod train;

pub use error::{HcfError, Result};
pub use eval::{auc, evaluate_pair, EvalReport, LabeledScore, Scenario, ScenarioKind};
pub use fm::{Direction, FmModel, Variant};
pub use pipelines::{
    build_candidates, recommend, run_dissemination, CandidateParams, DismParams, RecoParams,
};
pub use similarity::{cosine, heterogeneous_neighbors, homogeneous_neighbors};
pub use store::{
    EngagementEvent, EngagementStore, EntityId, EntityKind, Polarity, StoreBuilder,
};
pub use synth::{generate, GenConfig, GroundTruth, ResponseOracle};
pub use train::{train, TrainConfig, TrainReport};
