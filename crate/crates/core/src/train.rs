//! Stochastic gradient training of the factorization machine.
//!
//! Every merged event becomes one instance: positive polarity labels 1,
//! negative labels 0, and the event itself is left out of the history
//! blocks of its own instance. Instances are encoded once up front;
//! epochs then shuffle and update in place.
//!
//! All randomness (factor init, per-epoch shuffles) flows from one seeded
//! generator, so equal (store, config, seed) produce bit-identical models.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HcfError, Result};
use crate::fm::{encode, Direction, FeatureIndex, FeatureVector, FmModel, Link, Variant};
use crate::store::{EngagementStore, Polarity};

/// Hyperparameters. The defaults are the ones every pipeline uses unless
/// a caller overrides them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Factor dimension.
    pub k: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 penalty on linear weights.
    pub l2_w: f64,
    /// L2 penalty on factor weights.
    pub l2_v: f64,
    /// Std-dev of the Gaussian factor initialization.
    pub init_sigma: f64,
    pub link: Link,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 16,
            epochs: 40,
            learning_rate: 0.05,
            l2_w: 1e-4,
            l2_v: 1e-4,
            init_sigma: 0.01,
            link: Link::Logistic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HcfError::InvalidConfig(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, value) in [("l2_w", self.l2_w), ("l2_v", self.l2_v), ("init_sigma", self.init_sigma)] {
            if value < 0.0 || !value.is_finite() {
                return bad(format!("{name} must be non-negative, got {value}"));
            }
        }
        Ok(())
    }
}

/// What training observed, epoch by epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean pre-update instance loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub n_instances: usize,
    pub n_positive: usize,
    pub n_negative: usize,
}

/// One encoded training example.
struct Instance {
    x: FeatureVector,
    y: f64,
}

fn build_instances(
    store: &EngagementStore,
    index: &FeatureIndex,
    variant: Variant,
    direction: Direction,
) -> Result<Vec<Instance>> {
    let mut instances = Vec::with_capacity(store.events().len());
    for event in store.events() {
        let (target, counterpart) = match direction {
            Direction::Recommendation => (event.user, event.item),
            Direction::Dissemination => (event.item, event.user),
        };
        let x = encode(
            store,
            index,
            variant,
            target,
            counterpart,
            Some((counterpart, event.polarity)),
        )?;
        let y = match event.polarity {
            Polarity::Positive => 1.0,
            Polarity::Negative => 0.0,
        };
        instances.push(Instance { x, y });
    }
    Ok(instances)
}

/// Trains a model for (variant, direction) on the full store.
pub fn train(
    store: &EngagementStore,
    variant: Variant,
    direction: Direction,
    config: &TrainConfig,
    seed: u64,
) -> Result<(FmModel, TrainReport)> {
    config.validate()?;
    if store.events().is_empty() {
        return Err(HcfError::EmptyStore);
    }

    let index = FeatureIndex::for_store(store, direction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model =
        FmModel::init(index, variant, config.link, config.k, config.init_sigma, &mut rng)?;
    let instances = build_instances(store, &index, variant, direction)?;

    let k = config.k;
    let lr = config.learning_rate;
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut sums = vec![0.0; k];

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_total = 0.0;
        for &idx in &order {
            let Instance { x, y } = &instances[idx];

            // forward pass: linear term, per-factor sums, pairwise term
            let mut linear = model.w0;
            sums.fill(0.0);
            let mut sq = 0.0;
            for &(i, xi) in x {
                linear += model.w[i] * xi;
                let row = &model.v[i * k..(i + 1) * k];
                for (s, &vf) in sums.iter_mut().zip(row) {
                    let t = vf * xi;
                    *s += t;
                    sq += t * t;
                }
            }
            let s_sum: f64 = sums.iter().map(|s| s * s).sum();
            let raw = linear + 0.5 * (s_sum - sq);

            // logistic loss, computed before the update
            loss_total += raw.max(0.0) + (-raw.abs()).exp().ln_1p() - y * raw;
            let g = crate::fm::sigmoid(raw) - y;

            model.w0 -= lr * g;
            for &(i, xi) in x {
                model.w[i] -= lr * (g * xi + config.l2_w * model.w[i]);
                let row = &mut model.v[i * k..(i + 1) * k];
                for (f, vf) in row.iter_mut().enumerate() {
                    let dv = g * xi * (sums[f] - *vf * xi);
                    *vf -= lr * (dv + config.l2_v * *vf);
                }
            }
        }
        let mean = loss_total / instances.len() as f64;
        if !mean.is_finite() {
            return Err(HcfError::NonFiniteLoss { epoch });
        }
        epoch_loss.push(mean);
    }

    let n_positive = instances.iter().filter(|i| i.y == 1.0).count();
    let report = TrainReport {
        epoch_loss,
        n_instances: instances.len(),
        n_positive,
        n_negative: instances.len() - n_positive,
    };
    Ok((model, report))
}
