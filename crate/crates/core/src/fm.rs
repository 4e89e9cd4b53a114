//! Second-order factorization machine over engagement features.
//!
//! An instance pairs a *target* entity with a *candidate* entity and
//! describes the target's engagement history:
//!
//! * one indicator for the target,
//! * one indicator for the candidate,
//! * the target's positively-engaged counterparts, each weighted 1/|P|,
//! * (heterogeneous variant only) the negatively-engaged counterparts,
//!   each weighted 1/|N|.
//!
//! The model scores an instance as
//! `w0 + sum_i w_i x_i + sum_{i<j} <v_i, v_j> x_i x_j`, with the pairwise
//! term computed through per-factor sums in O(active * k) instead of
//! enumerating pairs.
//!
//! Both variants share one feature layout (the negative-history block is
//! allocated even when the homogeneous variant never writes to it), so a
//! store without negative events trains to identical parameters under
//! either variant.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{HcfError, Result};
use crate::store::{EngagementStore, EntityId, EntityKind, Polarity};

/// Which history polarities the model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Homogeneous: positive history only.
    Ccf,
    /// Heterogeneous: positive and negative history.
    Hcf,
}

/// What is being ranked for whom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// Rank items for a user.
    #[serde(rename = "reco")]
    Recommendation,
    /// Rank users for an item.
    #[serde(rename = "dism")]
    Dissemination,
}

impl Direction {
    pub fn target_kind(self) -> EntityKind {
        match self {
            Direction::Recommendation => EntityKind::User,
            Direction::Dissemination => EntityKind::Item,
        }
    }

    pub fn candidate_kind(self) -> EntityKind {
        match self {
            Direction::Recommendation => EntityKind::Item,
            Direction::Dissemination => EntityKind::User,
        }
    }
}

/// The four feature blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Candidate,
    PosHistory,
    NegHistory,
}

impl Role {
    const ALL: [Role; 4] = [Role::Target, Role::Candidate, Role::PosHistory, Role::NegHistory];
}

/// A feature position described by what it means rather than where it sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureKey {
    pub kind: EntityKind,
    pub index: u32,
    pub role: Role,
}

/// Fixed mapping between feature keys and dense feature positions for one
/// store universe and direction. Layout, in order: target indicators,
/// candidate indicators, positive history, negative history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureIndex {
    pub direction: Direction,
    pub n_users: usize,
    pub n_items: usize,
}

impl FeatureIndex {
    pub fn for_store(store: &EngagementStore, direction: Direction) -> FeatureIndex {
        FeatureIndex { direction, n_users: store.n_users(), n_items: store.n_items() }
    }

    pub fn target_kind(&self) -> EntityKind {
        self.direction.target_kind()
    }

    pub fn candidate_kind(&self) -> EntityKind {
        self.direction.candidate_kind()
    }

    fn count_of(&self, kind: EntityKind) -> usize {
        match kind {
            EntityKind::User => self.n_users,
            EntityKind::Item => self.n_items,
        }
    }

    fn target_count(&self) -> usize {
        self.count_of(self.target_kind())
    }

    fn candidate_count(&self) -> usize {
        self.count_of(self.candidate_kind())
    }

    pub fn len(&self) -> usize {
        self.target_count() + 3 * self.candidate_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind_of_role(&self, role: Role) -> EntityKind {
        match role {
            Role::Target => self.target_kind(),
            _ => self.candidate_kind(),
        }
    }

    pub fn offset(&self, role: Role) -> usize {
        match role {
            Role::Target => 0,
            Role::Candidate => self.target_count(),
            Role::PosHistory => self.target_count() + self.candidate_count(),
            Role::NegHistory => self.target_count() + 2 * self.candidate_count(),
        }
    }

    /// Dense position of `(role, id)`; errors when the id's kind does not
    /// fit the role or its index is out of range for this universe.
    pub fn feature(&self, role: Role, id: EntityId) -> Result<usize> {
        let expected = self.kind_of_role(role);
        if id.kind != expected {
            return Err(HcfError::ContractViolation(format!(
                "role {role:?} expects a {expected:?}, got {:?}",
                id.kind
            )));
        }
        if (id.index as usize) >= self.count_of(expected) {
            return Err(HcfError::UnknownEntity(id));
        }
        Ok(self.offset(role) + id.index as usize)
    }

    /// Like [`FeatureIndex::feature`], but an id beyond this universe
    /// yields `Ok(None)` instead of an error: entities first seen after
    /// training have no slot, and scoring simply proceeds without them.
    /// A role/kind mismatch is still an error — that is a caller bug,
    /// not a cold-start condition.
    pub fn known_feature(&self, role: Role, id: EntityId) -> Result<Option<usize>> {
        let expected = self.kind_of_role(role);
        if id.kind != expected {
            return Err(HcfError::ContractViolation(format!(
                "role {role:?} expects a {expected:?}, got {:?}",
                id.kind
            )));
        }
        if (id.index as usize) >= self.count_of(expected) {
            return Ok(None);
        }
        Ok(Some(self.offset(role) + id.index as usize))
    }

    /// Inverse of [`FeatureIndex::feature`].
    pub fn key_of(&self, feature: usize) -> Option<FeatureKey> {
        let mut start = 0;
        for role in Role::ALL {
            let kind = self.kind_of_role(role);
            let count = self.count_of(kind);
            if feature < start + count {
                return Some(FeatureKey { kind, index: (feature - start) as u32, role });
            }
            start += count;
        }
        None
    }

    /// All keys in dense position order.
    pub fn keys(&self) -> impl Iterator<Item = FeatureKey> + '_ {
        (0..self.len()).map(|f| self.key_of(f).expect("position in range"))
    }
}

/// Sparse instance: (feature position, value), ascending by position.
pub type FeatureVector = Vec<(usize, f64)>;

/// Builds the instance for (target, candidate). `exclude` drops one
/// (counterpart, polarity) engagement from the target's history blocks —
/// used in training so the label event does not describe itself.
/// Entities interned after the model's universe was fixed contribute no
/// slot: their indicators and history entries are silently dropped, so a
/// wholly unseen pair still scores as `w0` alone.
pub fn encode(
    store: &EngagementStore,
    index: &FeatureIndex,
    variant: Variant,
    target: EntityId,
    candidate: EntityId,
    exclude: Option<(EntityId, Polarity)>,
) -> Result<FeatureVector> {
    // The store may have grown past the model's universe (new arrivals
    // interned after the trailing training entity), but never shrunk —
    // dense ids are assigned in first-encounter order, so a shared
    // prefix is what keeps model slots meaningful.
    if store.n_users() < index.n_users || store.n_items() < index.n_items {
        return Err(HcfError::ContractViolation(format!(
            "store universe {}x{} is smaller than the feature index universe {}x{}",
            store.n_users(),
            store.n_items(),
            index.n_users,
            index.n_items
        )));
    }
    let mut x: FeatureVector = Vec::with_capacity(2 + 2 * store.event_count(target)?);
    if let Some(position) = index.known_feature(Role::Target, target)? {
        x.push((position, 1.0));
    }
    if let Some(position) = index.known_feature(Role::Candidate, candidate)? {
        x.push((position, 1.0));
    }

    let push_history = |polarity: Polarity, role: Role, x: &mut FeatureVector| -> Result<()> {
        let mut history = store.history(target, polarity)?;
        if let Some((skip, skip_polarity)) = exclude {
            if skip_polarity == polarity {
                history.retain(|&(id, _)| id != skip);
            }
        }
        // Entities without a slot drop out; the average runs over the
        // entries that remain encodable.
        let mut known = Vec::with_capacity(history.len());
        for (id, _) in history {
            if let Some(position) = index.known_feature(role, id)? {
                known.push(position);
            }
        }
        if known.is_empty() {
            return Ok(());
        }
        let value = 1.0 / known.len() as f64;
        for position in known {
            x.push((position, value));
        }
        Ok(())
    };

    push_history(Polarity::Positive, Role::PosHistory, &mut x)?;
    if variant == Variant::Hcf {
        push_history(Polarity::Negative, Role::NegHistory, &mut x)?;
    }
    // Block offsets ascend (target < candidate < positive < negative) and
    // history rows are sorted, so the vector is sorted by construction.
    debug_assert!(x.windows(2).all(|w| w[0].0 < w[1].0));
    Ok(x)
}

/// Link between raw score and prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logistic,
}

/// Numerically stable 1 / (1 + exp(-t)).
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + exp(t)) without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Sparse gradient of the per-instance loss.
#[derive(Debug, Clone)]
pub struct FmGradient {
    pub w0: f64,
    /// (feature position, dL/dw) for active features.
    pub w: Vec<(usize, f64)>,
    /// (feature position, dL/dv over all k factors) for active features.
    pub v: Vec<(usize, Vec<f64>)>,
}

/// Trained (or freshly initialized) factorization machine.
#[derive(Debug, Clone)]
pub struct FmModel {
    pub variant: Variant,
    pub direction: Direction,
    pub link: Link,
    pub index: FeatureIndex,
    pub k: usize,
    pub w0: f64,
    pub w: Vec<f64>,
    /// Row-major n x k factor matrix.
    pub v: Vec<f64>,
}

const MODEL_FORMAT_VERSION: u32 = 1;

impl FmModel {
    /// Zero linear weights, Gaussian factors.
    pub fn init(
        index: FeatureIndex,
        variant: Variant,
        link: Link,
        k: usize,
        init_sigma: f64,
        rng: &mut impl Rng,
    ) -> Result<FmModel> {
        if k == 0 {
            return Err(HcfError::InvalidConfig("factor count k must be at least 1".into()));
        }
        let normal = Normal::new(0.0, init_sigma)
            .map_err(|e| HcfError::InvalidConfig(format!("init_sigma: {e}")))?;
        let n = index.len();
        let v = (0..n * k).map(|_| normal.sample(rng)).collect();
        Ok(FmModel {
            variant,
            direction: index.direction,
            link,
            index,
            k,
            w0: 0.0,
            w: vec![0.0; n],
            v,
        })
    }

    pub fn n_features(&self) -> usize {
        self.w.len()
    }

    fn row(&self, feature: usize) -> &[f64] {
        &self.v[feature * self.k..(feature + 1) * self.k]
    }

    /// Per-factor weighted sums over the active features. These drive both
    /// the fast pairwise term and the factor gradients.
    fn factor_sums(&self, x: &FeatureVector) -> Vec<f64> {
        let mut sums = vec![0.0; self.k];
        for &(i, xi) in x {
            for (f, s) in self.row(i).iter().zip(sums.iter_mut()) {
                *s += f * xi;
            }
        }
        sums
    }

    /// Linear + pairwise score before the link function.
    pub fn raw_score(&self, x: &FeatureVector) -> f64 {
        let mut linear = self.w0;
        for &(i, xi) in x {
            linear += self.w[i] * xi;
        }
        let sums = self.factor_sums(x);
        let mut pairwise = 0.0;
        for (f, sf) in sums.iter().enumerate() {
            let mut sq = 0.0;
            for &(i, xi) in x {
                let vf = self.row(i)[f] * xi;
                sq += vf * vf;
            }
            pairwise += sf * sf - sq;
        }
        linear + 0.5 * pairwise
    }

    /// Prediction after the link function (a probability for the logistic
    /// link).
    pub fn score(&self, x: &FeatureVector) -> f64 {
        match self.link {
            Link::Logistic => sigmoid(self.raw_score(x)),
        }
    }

    /// Per-instance loss, `y` in {0.0, 1.0}.
    pub fn loss(&self, x: &FeatureVector, y: f64) -> f64 {
        let s = self.raw_score(x);
        match self.link {
            Link::Logistic => softplus(s) - y * s,
        }
    }

    /// Analytic gradient of [`FmModel::loss`] (regularization excluded).
    pub fn loss_gradient(&self, x: &FeatureVector, y: f64) -> FmGradient {
        let s = self.raw_score(x);
        let g = match self.link {
            Link::Logistic => sigmoid(s) - y,
        };
        let sums = self.factor_sums(x);
        let mut w = Vec::with_capacity(x.len());
        let mut v = Vec::with_capacity(x.len());
        for &(i, xi) in x {
            w.push((i, g * xi));
            let row = self.row(i);
            let dv = (0..self.k).map(|f| g * xi * (sums[f] - row[f] * xi)).collect();
            v.push((i, dv));
        }
        FmGradient { w0: g, w, v }
    }

    pub fn write_to(&self, writer: impl Write) -> Result<()> {
        let doc = ModelDoc {
            format_version: MODEL_FORMAT_VERSION,
            variant: self.variant,
            direction: self.direction,
            link: self.link,
            k: self.k,
            index: self.index.keys().map(|key| (key.kind, key.index, key.role)).collect(),
            w0: self.w0,
            w: self.w.clone(),
            v: self.v.clone(),
        };
        let mut out = BufWriter::new(writer);
        serde_json::to_writer(&mut out, &doc)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    pub fn read_from(reader: impl Read) -> Result<FmModel> {
        let doc: ModelDoc = serde_json::from_reader(BufReader::new(reader))?;
        doc.into_model()
    }

    pub fn load(path: &Path) -> Result<FmModel> {
        FmModel::read_from(File::open(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    variant: Variant,
    direction: Direction,
    link: Link,
    k: usize,
    /// One (kind, id, role) triple per feature position.
    index: Vec<(EntityKind, u32, Role)>,
    w0: f64,
    w: Vec<f64>,
    #[serde(rename = "V")]
    v: Vec<f64>,
}

impl ModelDoc {
    fn into_model(self) -> Result<FmModel> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(HcfError::MalformedDocument(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.k == 0 {
            return Err(HcfError::MalformedDocument("model has k = 0".into()));
        }
        let target_count = self
            .index
            .iter()
            .filter(|&&(_, _, role)| role == Role::Target)
            .count();
        let candidate_count = self
            .index
            .iter()
            .filter(|&&(_, _, role)| role == Role::Candidate)
            .count();
        let (n_users, n_items) = match self.direction {
            Direction::Recommendation => (target_count, candidate_count),
            Direction::Dissemination => (candidate_count, target_count),
        };
        let index = FeatureIndex { direction: self.direction, n_users, n_items };
        let expected: Vec<(EntityKind, u32, Role)> =
            index.keys().map(|key| (key.kind, key.index, key.role)).collect();
        if expected != self.index {
            return Err(HcfError::MalformedDocument(
                "feature table does not describe a canonical layout".into(),
            ));
        }
        let n = index.len();
        if self.w.len() != n || self.v.len() != n * self.k {
            return Err(HcfError::MalformedDocument(format!(
                "parameter sizes w={} V={} do not match {} features x {} factors",
                self.w.len(),
                self.v.len(),
                n,
                self.k
            )));
        }
        if !self.w0.is_finite()
            || self.w.iter().any(|p| !p.is_finite())
            || self.v.iter().any(|p| !p.is_finite())
        {
            return Err(HcfError::MalformedDocument("non-finite model parameter".into()));
        }
        Ok(FmModel {
            variant: self.variant,
            direction: self.direction,
            link: self.link,
            index,
            k: self.k,
            w0: self.w0,
            w: self.w,
            v: self.v,
        })
    }
}
