//! Synthetic dataset generation with ground truth, evaluation metrics, and
//! dataset serialization.
//!
//! Every set is a noisy view of a shared universe of landmarks: a random
//! rigid transform of the landmark positions plus coordinate noise, with
//! features drawn from per-landmark prototypes. Prototypes live in the first
//! half of the feature dimensions; the second half carries per-observation
//! distractor noise (scaled by `distractor_ratio * feature_noise_sigma`)
//! that raw feature similarity cannot see through but a trained projection
//! can suppress.

mod delaunay;
mod io;

pub use delaunay::delaunay;
pub use io::{dataset_from_json, dataset_to_json, load_dataset, save_dataset};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{KeypointSet, Matching};

const GENERATION_RETRIES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub universe_size: usize,
    pub num_sets: usize,
    pub coord_noise_sigma: f64,
    pub feature_dim: usize,
    pub feature_noise_sigma: f64,
    /// Distractor-subspace noise std, as a multiple of `feature_noise_sigma`.
    pub distractor_ratio: f64,
    /// Number of trailing feature dimensions carrying distractor noise
    /// (`None` = half of `feature_dim`).
    pub distractor_dims: Option<usize>,
    /// Probability of dropping each landmark independently.
    pub occlusion_rate: f64,
    /// Expected fraction of spurious extra points per set.
    pub outlier_rate: f64,
    /// When set, exactly this many landmarks are kept per set instead of
    /// i.i.d. occlusion.
    pub visible_per_set: Option<usize>,
    pub rng_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            universe_size: 10,
            num_sets: 20,
            coord_noise_sigma: 0.02,
            feature_dim: 16,
            feature_noise_sigma: 0.1,
            distractor_ratio: 20.0,
            distractor_dims: None,
            occlusion_rate: 0.0,
            outlier_rate: 0.0,
            visible_per_set: None,
            rng_seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.universe_size == 0 || self.num_sets == 0 || self.feature_dim == 0 {
            return Err(Error::Config("sizes must be >= 1".into()));
        }
        for (name, rate) in [("occlusion_rate", self.occlusion_rate), ("outlier_rate", self.outlier_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {rate}")));
            }
        }
        if self.coord_noise_sigma < 0.0
            || self.feature_noise_sigma < 0.0
            || self.distractor_ratio < 0.0
        {
            return Err(Error::Config("noise parameters must be >= 0".into()));
        }
        if let Some(v) = self.visible_per_set {
            if v == 0 || v > self.universe_size {
                return Err(Error::Config(format!(
                    "visible_per_set must be in [1, universe_size], got {v}"
                )));
            }
        }
        if let Some(k) = self.distractor_dims {
            if k >= self.feature_dim {
                return Err(Error::Config(format!(
                    "distractor_dims must leave at least one signal dimension, got {k} of {}",
                    self.feature_dim
                )));
            }
        }
        Ok(())
    }

    fn signal_dim(&self) -> usize {
        self.feature_dim - self.distractor_dims.unwrap_or(self.feature_dim / 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sets: Vec<KeypointSet>,
    pub universe_size: usize,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        for ks in &self.sets {
            if let Some(labels) = &ks.universe_labels {
                for l in labels.iter().flatten() {
                    if *l >= self.universe_size {
                        return Err(Error::Config(format!(
                            "set {}: label {l} outside universe of size {}",
                            ks.set_id, self.universe_size
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Number of universe labels observed by both sets.
pub fn common_labels(a: &KeypointSet, b: &KeypointSet) -> Result<usize> {
    let (la, lb) = match (a.label_set(), b.label_set()) {
        (Some(la), Some(lb)) => (la, lb),
        _ => {
            return Err(Error::MissingLabels(format!(
                "sets {} and {}",
                a.set_id, b.set_id
            )))
        }
    };
    Ok(la.intersection(&lb).count())
}

/// Samples a synthetic dataset. Deterministic given the seed: each set draws
/// from its own child stream, so per-set retries cannot shift later sets.
pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let signal_dim = cfg.signal_dim();
    let mut universe_rng = ChaCha8Rng::seed_from_u64(master.gen());
    let positions: Vec<(f64, f64)> = (0..cfg.universe_size)
        .map(|_| (universe_rng.gen::<f64>(), universe_rng.gen::<f64>()))
        .collect();
    let prototypes: Vec<Vec<f64>> = (0..cfg.universe_size)
        .map(|_| {
            (0..cfg.feature_dim)
                .map(|d| {
                    if d < signal_dim {
                        universe_rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let mut sets = Vec::with_capacity(cfg.num_sets);
    for set_idx in 0..cfg.num_sets {
        let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
        let mut made = None;
        for _ in 0..GENERATION_RETRIES {
            match sample_set(cfg, set_idx, &positions, &prototypes, &mut rng)? {
                Some(ks) => {
                    made = Some(ks);
                    break;
                }
                None => continue,
            }
        }
        let ks = made.ok_or_else(|| {
            Error::Generation(format!(
                "set {set_idx}: fewer than 3 surviving points after {GENERATION_RETRIES} attempts"
            ))
        })?;
        sets.push(ks);
    }
    let ds = Dataset { sets, universe_size: cfg.universe_size };
    ds.validate()?;
    Ok(ds)
}

fn sample_set(
    cfg: &SyntheticConfig,
    set_idx: usize,
    positions: &[(f64, f64)],
    prototypes: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<Option<KeypointSet>> {
    let signal_dim = cfg.signal_dim();
    let distractor_sigma = cfg.distractor_ratio * cfg.feature_noise_sigma;

    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
    let (sin_t, cos_t) = theta.sin_cos();
    let shift = (rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0);
    let transform = |(x, y): (f64, f64)| -> (f64, f64) {
        let (dx, dy) = (x - 0.5, y - 0.5);
        (
            cos_t * dx - sin_t * dy + 0.5 + shift.0,
            sin_t * dx + cos_t * dy + 0.5 + shift.1,
        )
    };

    let visible: Vec<usize> = match cfg.visible_per_set {
        Some(v) => {
            let mut idx = rand::seq::index::sample(rng, cfg.universe_size, v).into_vec();
            idx.sort_unstable();
            idx
        }
        None => (0..cfg.universe_size)
            .filter(|_| !rng.gen_bool(cfg.occlusion_rate))
            .collect(),
    };

    let mut points = Vec::new();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for &c in &visible {
        let (x, y) = transform(positions[c]);
        points.push((
            x + cfg.coord_noise_sigma * rng.sample::<f64, _>(StandardNormal),
            y + cfg.coord_noise_sigma * rng.sample::<f64, _>(StandardNormal),
        ));
        let feat = (0..cfg.feature_dim)
            .map(|d| {
                let mut v = prototypes[c][d]
                    + cfg.feature_noise_sigma * rng.sample::<f64, _>(StandardNormal);
                if d >= signal_dim {
                    v += distractor_sigma * rng.sample::<f64, _>(StandardNormal);
                }
                v
            })
            .collect();
        features.push(feat);
        labels.push(Some(c));
    }

    let outlier_count = (0..cfg.universe_size)
        .filter(|_| rng.gen_bool(cfg.outlier_rate))
        .count();
    for _ in 0..outlier_count {
        let (x, y) = transform((rng.gen::<f64>(), rng.gen::<f64>()));
        points.push((
            x + cfg.coord_noise_sigma * rng.sample::<f64, _>(StandardNormal),
            y + cfg.coord_noise_sigma * rng.sample::<f64, _>(StandardNormal),
        ));
        let feat = (0..cfg.feature_dim)
            .map(|d| {
                let mut v = if d < signal_dim {
                    rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                v += cfg.feature_noise_sigma * rng.sample::<f64, _>(StandardNormal);
                if d >= signal_dim {
                    v += distractor_sigma * rng.sample::<f64, _>(StandardNormal);
                }
                v
            })
            .collect();
        features.push(feat);
        labels.push(None);
    }

    if points.len() < 3 {
        return Ok(None);
    }
    let edges = delaunay(&points)?;
    let ks = KeypointSet::new(
        format!("set_{set_idx:04}"),
        points,
        features,
        edges,
        Some(labels),
    )?;
    Ok(Some(ks))
}

/// Fraction of ground-truth common labels recovered by the prediction.
/// Vacuously 1.0 when there is nothing to recover and nothing predicted.
pub fn accuracy(pred: &Matching, ks1: &KeypointSet, ks2: &KeypointSet) -> Result<f64> {
    let correct = correct_pairs(pred, ks1, ks2)?;
    let possible = common_labels(ks1, ks2)?;
    Ok(if possible == 0 {
        if pred.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        correct as f64 / possible as f64
    })
}

/// Harmonic mean of precision (`correct / |pred|`) and recall
/// (`correct / #common labels`); the all-empty case scores 1.0.
pub fn f1(pred: &Matching, ks1: &KeypointSet, ks2: &KeypointSet) -> Result<f64> {
    let correct = correct_pairs(pred, ks1, ks2)?;
    let possible = common_labels(ks1, ks2)?;
    if pred.is_empty() && possible == 0 {
        return Ok(1.0);
    }
    if pred.is_empty() || possible == 0 {
        return Ok(0.0);
    }
    let precision = correct as f64 / pred.len() as f64;
    let recall = correct as f64 / possible as f64;
    Ok(if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    })
}

fn correct_pairs(pred: &Matching, ks1: &KeypointSet, ks2: &KeypointSet) -> Result<usize> {
    let (l1, l2) = match (&ks1.universe_labels, &ks2.universe_labels) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::MissingLabels(format!(
                "sets {} and {}",
                ks1.set_id, ks2.set_id
            )))
        }
    };
    Ok(pred
        .pairs
        .iter()
        .filter(|&&(i, s)| matches!((l1[i], l2[s]), (Some(a), Some(b)) if a == b))
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled_set(id: &str, labels: &[Option<usize>]) -> KeypointSet {
        let n = labels.len();
        let points: Vec<(f64, f64)> =
            (0..n).map(|i| (i as f64, (i * i % 7) as f64 * 0.3 + 0.1)).collect();
        let feats = vec![vec![0.0]; n];
        let edges = if n >= 3 { delaunay(&points).unwrap() } else { vec![] };
        KeypointSet::new(id, points, feats, edges, Some(labels.to_vec())).unwrap()
    }

    #[test]
    fn no_occlusion_yields_full_permutations() {
        let cfg = SyntheticConfig {
            universe_size: 6,
            num_sets: 4,
            rng_seed: 9,
            ..Default::default()
        };
        let ds = generate(&cfg).unwrap();
        for ks in &ds.sets {
            assert_eq!(ks.len(), 6);
            let mut labels: Vec<usize> =
                ks.universe_labels.as_ref().unwrap().iter().map(|l| l.unwrap()).collect();
            labels.sort_unstable();
            assert_eq!(labels, (0..6).collect::<Vec<_>>());
        }
    }

    #[test]
    fn same_seed_gives_identical_datasets() {
        let cfg = SyntheticConfig {
            universe_size: 5,
            num_sets: 3,
            occlusion_rate: 0.2,
            outlier_rate: 0.1,
            rng_seed: 1234,
            ..Default::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    }

    #[test]
    fn zero_noise_repeats_prototype_features() {
        let cfg = SyntheticConfig {
            universe_size: 4,
            num_sets: 3,
            coord_noise_sigma: 0.0,
            feature_noise_sigma: 0.0,
            rng_seed: 5,
            ..Default::default()
        };
        let ds = generate(&cfg).unwrap();
        let by_label = |ks: &KeypointSet, label: usize| -> Vec<f64> {
            let idx = ks
                .universe_labels
                .as_ref()
                .unwrap()
                .iter()
                .position(|l| *l == Some(label))
                .unwrap();
            ks.features[idx].clone()
        };
        for label in 0..4 {
            let first = by_label(&ds.sets[0], label);
            for ks in &ds.sets[1..] {
                assert_eq!(by_label(ks, label), first);
            }
        }
    }

    #[test]
    fn full_occlusion_fails_generation() {
        let cfg = SyntheticConfig {
            universe_size: 5,
            num_sets: 2,
            occlusion_rate: 1.0,
            ..Default::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::Generation(_))));
    }

    #[test]
    fn visible_per_set_is_exact() {
        let cfg = SyntheticConfig {
            universe_size: 10,
            num_sets: 5,
            visible_per_set: Some(8),
            rng_seed: 3,
            ..Default::default()
        };
        let ds = generate(&cfg).unwrap();
        for ks in &ds.sets {
            assert_eq!(ks.len(), 8);
        }
    }

    #[test]
    fn accuracy_counts_shared_labels() {
        let a = labeled_set("a", &[Some(0), Some(1), Some(2)]);
        let b = labeled_set("b", &[Some(1), Some(0), Some(3)]);
        // common labels: {0, 1}
        let perfect = Matching::new([(0, 1), (1, 0)], 3, 3).unwrap();
        assert_eq!(accuracy(&perfect, &a, &b).unwrap(), 1.0);
        let empty = Matching::empty(3, 3);
        assert_eq!(accuracy(&empty, &a, &b).unwrap(), 0.0);
        let half = Matching::new([(0, 1), (1, 2)], 3, 3).unwrap();
        assert_eq!(accuracy(&half, &a, &b).unwrap(), 0.5);
    }

    #[test]
    fn f1_balances_precision_and_recall() {
        let a = labeled_set("a", &[Some(0), Some(1), Some(2)]);
        let b = labeled_set("b", &[Some(1), Some(0), Some(3)]);
        let perfect = Matching::new([(0, 1), (1, 0)], 3, 3).unwrap();
        assert_eq!(f1(&perfect, &a, &b).unwrap(), 1.0);
        // one correct of two predicted, two possible: p = r = 0.5
        let mixed = Matching::new([(0, 1), (2, 2)], 3, 3).unwrap();
        assert_eq!(f1(&mixed, &a, &b).unwrap(), 0.5);
        // vacuous case: no common labels and nothing predicted
        let c = labeled_set("c", &[Some(7), Some(8), Some(9)]);
        assert_eq!(f1(&Matching::empty(3, 3), &a, &c).unwrap(), 1.0);
    }

    #[test]
    fn outliers_carry_no_labels() {
        let cfg = SyntheticConfig {
            universe_size: 6,
            num_sets: 3,
            outlier_rate: 0.5,
            rng_seed: 77,
            ..Default::default()
        };
        let ds = generate(&cfg).unwrap();
        let any_outlier = ds.sets.iter().any(|ks| {
            ks.universe_labels.as_ref().unwrap().iter().any(|l| l.is_none())
        });
        assert!(any_outlier);
        ds.validate().unwrap();
    }
}
