//! Seeded synthetic engagement worlds.
//!
//! Every user and item gets a latent vector; the probability that a user
//! reacts positively to an item is `sigmoid(<z_u, x_i> + bias)`, with the
//! bias calibrated so the overall negative rate hits a target.
//!
//! Item vectors live in planted *anti-cluster pairs*: cluster `j` sits at
//! centroid `+c_j`, its mirror at `-c_j`. A user who dislikes the mirror
//! side therefore predictably likes the original side — exactly the
//! dislike-to-like structure the heterogeneous pipeline is built to
//! exploit, invisible to methods that only read positive history.
//!
//! Two further wrinkles shape the world:
//! * item exposure follows a Zipf law, so a long tail of items has few
//!   or no engagements (fresh-item evaluation needs them);
//! * a slice of "new" users carries at most a few events drawn from the
//!   items they react to most strongly — mostly their most-averse items
//!   (cold-start users arrive having skipped things), the rest their
//!   most-appealing ones.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::error::{HcfError, Result};
use crate::fm::sigmoid;
use crate::store::{EngagementStore, Polarity, StoreBuilder};

/// Shape of the generated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub latent_dim: usize,
    /// Number of (+c, -c) centroid pairs.
    pub n_anti_clusters: usize,
    /// Events per established user (each on a distinct item).
    pub events_per_user: usize,
    /// Leading fraction of users generated as cold-start arrivals.
    pub new_user_fraction: f64,
    pub new_user_max_events: usize,
    /// Desired overall share of negative events.
    pub negative_rate_target: f64,
    /// Centroid norm; larger pulls reaction probabilities toward 0/1.
    pub separation: f64,
    /// Std-dev of item scatter around its centroid.
    pub item_noise: f64,
    /// Zipf exponent of item exposure; larger starves the tail harder.
    pub zipf_exponent: f64,
    /// New-user events come from the user's strongest reactions: with
    /// this probability a draw lands on one of the items the user is
    /// most averse to, otherwise on one of their most appealing items.
    pub new_user_dislike_bias: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_users: 2000,
            n_items: 1000,
            latent_dim: 8,
            n_anti_clusters: 4,
            events_per_user: 30,
            new_user_fraction: 0.3,
            new_user_max_events: 3,
            negative_rate_target: 0.4,
            separation: 3.0,
            item_noise: 0.25,
            zipf_exponent: 1.3,
            new_user_dislike_bias: 0.75,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HcfError::InvalidConfig(msg));
        if self.n_users == 0 || self.n_items == 0 {
            return bad("n_users and n_items must be positive".into());
        }
        if self.latent_dim == 0 || self.n_anti_clusters == 0 {
            return bad("latent_dim and n_anti_clusters must be positive".into());
        }
        if self.events_per_user == 0 || self.events_per_user > self.n_items {
            return bad(format!(
                "events_per_user must lie in 1..={} (distinct items per user), got {}",
                self.n_items, self.events_per_user
            ));
        }
        if !(0.0..1.0).contains(&self.new_user_fraction) {
            return bad(format!("new_user_fraction must lie in [0, 1), got {}", self.new_user_fraction));
        }
        if !(0.0..1.0).contains(&self.negative_rate_target) || self.negative_rate_target == 0.0 {
            return bad(format!(
                "negative_rate_target must lie strictly between 0 and 1, got {}",
                self.negative_rate_target
            ));
        }
        if !(0.0..=1.0).contains(&self.new_user_dislike_bias) {
            return bad(format!(
                "new_user_dislike_bias must lie in [0, 1], got {}",
                self.new_user_dislike_bias
            ));
        }
        for (name, value) in [
            ("separation", self.separation),
            ("item_noise", self.item_noise),
        ] {
            if value < 0.0 || !value.is_finite() {
                return bad(format!("{name} must be non-negative, got {value}"));
            }
        }
        if self.zipf_exponent <= 0.0 || !self.zipf_exponent.is_finite() {
            return bad(format!("zipf_exponent must be positive, got {}", self.zipf_exponent));
        }
        Ok(())
    }

    fn n_new_users(&self) -> usize {
        (self.n_users as f64 * self.new_user_fraction).floor() as usize
    }
}

/// The latent model behind a generated store, keyed by external entity
/// keys so it survives any re-indexing of the event log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub latent_dim: usize,
    pub bias: f64,
    pub users: Vec<String>,
    pub user_vectors: Vec<Vec<f64>>,
    pub items: Vec<String>,
    pub item_vectors: Vec<Vec<f64>>,
    /// (centroid pair, sign) per item.
    pub item_cluster: Vec<(usize, i8)>,
}

impl GroundTruth {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, self)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<GroundTruth> {
        GroundTruth::read_from(File::open(path)?)
    }

    pub fn read_from(reader: impl Read) -> Result<GroundTruth> {
        let truth: GroundTruth = serde_json::from_reader(BufReader::new(reader))?;
        if truth.users.len() != truth.user_vectors.len()
            || truth.items.len() != truth.item_vectors.len()
            || truth.item_cluster.len() != truth.items.len()
            || truth
                .user_vectors
                .iter()
                .chain(&truth.item_vectors)
                .any(|v| v.len() != truth.latent_dim)
        {
            return Err(HcfError::MalformedDocument(
                "ground truth tables have inconsistent sizes".into(),
            ));
        }
        Ok(truth)
    }
}

/// A generated world: the event store plus the model that produced it.
#[derive(Debug)]
pub struct SyntheticData {
    pub store: EngagementStore,
    pub truth: GroundTruth,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// 64-bit FNV-1a. The standard library's hasher is not guaranteed stable
/// across releases, and oracle responses must be reproducible forever.
fn fnv1a(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for part in parts {
        for byte in part.as_bytes() {
            h ^= u64::from(*byte);
            h = h.wrapping_mul(0x100000001b3);
        }
        // separator so ("ab", "c") and ("a", "bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Simulated audience. Given a (user, item) pair it always returns the
/// same reaction: the draw comes from a counter stream derived from the
/// pair's keys, independent of query order. The events `generate`
/// emits come from this same process, so replaying a stored pair
/// reproduces its polarity.
#[derive(Debug, Clone)]
pub struct ResponseOracle {
    seed: u64,
    bias: f64,
    users: HashMap<String, Vec<f64>>,
    items: HashMap<String, Vec<f64>>,
}

impl ResponseOracle {
    pub fn new(truth: &GroundTruth, seed: u64) -> ResponseOracle {
        ResponseOracle {
            seed,
            bias: truth.bias,
            users: truth
                .users
                .iter()
                .cloned()
                .zip(truth.user_vectors.iter().cloned())
                .collect(),
            items: truth
                .items
                .iter()
                .cloned()
                .zip(truth.item_vectors.iter().cloned())
                .collect(),
        }
    }

    fn vectors(&self, user_key: &str, item_key: &str) -> Result<(&[f64], &[f64])> {
        let z = self
            .users
            .get(user_key)
            .ok_or_else(|| HcfError::UnknownKey(user_key.to_string()))?;
        let x = self
            .items
            .get(item_key)
            .ok_or_else(|| HcfError::UnknownKey(item_key.to_string()))?;
        Ok((z, x))
    }

    pub fn positive_probability(&self, user_key: &str, item_key: &str) -> Result<f64> {
        let (z, x) = self.vectors(user_key, item_key)?;
        Ok(sigmoid(dot(z, x) + self.bias))
    }

    pub fn respond(&self, user_key: &str, item_key: &str) -> Result<Polarity> {
        let p = self.positive_probability(user_key, item_key)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(fnv1a(&[user_key, item_key]));
        Ok(if rng.random::<f64>() < p { Polarity::Positive } else { Polarity::Negative })
    }
}

/// Finds the bias that hits the target positive rate over a sample of
/// (user, exposure-weighted item) affinities. The mean reaction
/// probability rises monotonically with the bias, so bisection converges.
fn calibrate_bias(affinities: &[f64], target_positive: f64) -> f64 {
    let mean_rate = |b: f64| {
        affinities.iter().map(|&a| sigmoid(a + b)).sum::<f64>() / affinities.len() as f64
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_rate(mid) < target_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Generates a world. Equal (config, seed) yield identical stores and
/// ground truth, bit for bit.
pub fn generate(config: &GenConfig, seed: u64) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let d = config.latent_dim;

    // centroid pairs, at the requested separation from the origin
    let mut centroids = Vec::with_capacity(config.n_anti_clusters);
    for _ in 0..config.n_anti_clusters {
        let mut c: Vec<f64> = (0..d).map(|_| standard.sample(&mut rng)).collect();
        let norm = dot(&c, &c).sqrt();
        if norm > 0.0 {
            for x in &mut c {
                *x *= config.separation / norm;
            }
        }
        centroids.push(c);
    }

    // items scatter around a signed centroid
    let mut item_vectors = Vec::with_capacity(config.n_items);
    let mut item_cluster = Vec::with_capacity(config.n_items);
    for _ in 0..config.n_items {
        let cluster = rng.random_range(0..config.n_anti_clusters);
        let sign: i8 = if rng.random::<bool>() { 1 } else { -1 };
        let vector: Vec<f64> = centroids[cluster]
            .iter()
            .map(|&c| f64::from(sign) * c + config.item_noise * standard.sample(&mut rng))
            .collect();
        item_vectors.push(vector);
        item_cluster.push((cluster, sign));
    }

    let user_vectors: Vec<Vec<f64>> = (0..config.n_users)
        .map(|_| (0..d).map(|_| standard.sample(&mut rng)).collect())
        .collect();

    // exposure: a shuffled popularity ranking sampled through a Zipf law
    let mut popularity_order: Vec<usize> = (0..config.n_items).collect();
    popularity_order.shuffle(&mut rng);
    let zipf = Zipf::new(config.n_items as f64, config.zipf_exponent)
        .map_err(|e| HcfError::InvalidConfig(format!("zipf_exponent: {e}")))?;
    let draw_item = |rng: &mut ChaCha8Rng| -> usize {
        let rank = zipf.sample(rng) as usize;
        popularity_order[(rank - 1).min(config.n_items - 1)]
    };

    // bias calibration on a sample of exposure-weighted pairs
    let n_cal = (config.n_users * config.n_items).min(100_000);
    let cal_affinities: Vec<f64> = (0..n_cal)
        .map(|_| {
            let u = rng.random_range(0..config.n_users);
            let i = draw_item(&mut rng);
            dot(&user_vectors[u], &item_vectors[i])
        })
        .collect();
    let bias = calibrate_bias(&cal_affinities, 1.0 - config.negative_rate_target);

    let users: Vec<String> = (0..config.n_users).map(|u| format!("u{u}")).collect();
    let items: Vec<String> = (0..config.n_items).map(|i| format!("i{i}")).collect();
    let truth = GroundTruth {
        latent_dim: d,
        bias,
        users: users.clone(),
        user_vectors,
        items: items.clone(),
        item_vectors,
        item_cluster,
    };
    let oracle = ResponseOracle::new(&truth, seed);

    let n_new = config.n_new_users();
    let mut builder = StoreBuilder::with_universe(users.clone(), items.clone());
    let mut timestamp: i64 = 0;
    for (u, user_key) in users.iter().enumerate() {
        let is_new = u < n_new;
        let n_events = if is_new {
            config.new_user_max_events.min(config.events_per_user).max(1)
        } else {
            config.events_per_user
        };

        // cold-start users engage with what they react to most strongly:
        // both affinity tails, weighted toward the averse one
        let (disliked_pool, liked_pool): (Vec<usize>, Vec<usize>) = if is_new {
            let mut by_affinity: Vec<usize> = (0..config.n_items).collect();
            by_affinity.sort_by(|&a, &b| {
                let fa = dot(&truth.user_vectors[u], &truth.item_vectors[a]);
                let fb = dot(&truth.user_vectors[u], &truth.item_vectors[b]);
                fa.partial_cmp(&fb).expect("affinities are finite").then(a.cmp(&b))
            });
            let pool = (4 * n_events).max(16).min(config.n_items);
            let disliked = by_affinity[..pool].to_vec();
            let liked = by_affinity[config.n_items - pool..].to_vec();
            (disliked, liked)
        } else {
            (Vec::new(), Vec::new())
        };

        let mut chosen: BTreeSet<usize> = BTreeSet::new();
        let mut attempts = 0;
        while chosen.len() < n_events && attempts < 60 * n_events {
            attempts += 1;
            let item = if is_new {
                let pool = if rng.random::<f64>() < config.new_user_dislike_bias {
                    &disliked_pool
                } else {
                    &liked_pool
                };
                pool[rng.random_range(0..pool.len())]
            } else {
                draw_item(&mut rng)
            };
            chosen.insert(item);
        }
        // the popular head can saturate; fill from the exposure ranking
        for &item in popularity_order.iter() {
            if chosen.len() >= n_events {
                break;
            }
            chosen.insert(item);
        }

        for item in chosen {
            let polarity = oracle.respond(user_key, &items[item])?;
            builder.push_keys(user_key, &items[item], polarity, 1.0, timestamp)?;
            timestamp += 1;
        }
    }

    Ok(SyntheticData { store: builder.build(), truth })
}
