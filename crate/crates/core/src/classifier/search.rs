//! Random hyperparameter search scored on an inner hold-out split.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::{ForestHyperparams, MaxFeatures, RandomForest};
use super::metrics::Classifier;
use super::ClassifierError;
use crate::features::{split, FeatureMatrix};
use crate::generator::mix_seed;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SearchSpace {
    pub n_estimators: Vec<usize>,
    /// `0` stands for unlimited depth.
    pub max_depth: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    pub max_features: Vec<MaxFeatures>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            n_estimators: vec![10, 25, 50, 100, 200],
            max_depth: vec![5, 10, 15, 0],
            min_samples_split: vec![2, 5, 10],
            min_samples_leaf: vec![1, 5, 10, 20],
            max_features: vec![MaxFeatures::All, MaxFeatures::Sqrt],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub hyperparams: ForestHyperparams,
    /// Correct predictions on the inner validation split.
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: ForestHyperparams,
    pub best_accuracy: f64,
    pub trials: Vec<Trial>,
}

fn depth_key(d: Option<usize>) -> usize {
    d.unwrap_or(usize::MAX)
}

fn pick<T: Copy>(v: &[T], rng: &mut ChaCha8Rng, what: &str) -> Result<T, ClassifierError> {
    v.choose(rng)
        .copied()
        .ok_or_else(|| ClassifierError::Hyperparams(format!("search space `{what}` is empty")))
}

/// Ties on accuracy go to fewer trees, then shallower trees, then the
/// earlier trial.
pub fn hyperparameter_search<F: Scalar>(
    train: &FeatureMatrix<F>,
    space: &SearchSpace,
    trials: usize,
    seed: u64,
) -> Result<SearchResult, ClassifierError> {
    if trials == 0 {
        return Err(ClassifierError::Hyperparams("at least one trial is required".into()));
    }
    let (inner, valid) = split(train, 0.8, seed).map_err(|e| ClassifierError::Hyperparams(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let hp = ForestHyperparams {
            n_estimators: pick(&space.n_estimators, &mut rng, "n_estimators")?,
            max_depth: Some(pick(&space.max_depth, &mut rng, "max_depth")?).filter(|&d| d > 0),
            min_samples_split: pick(&space.min_samples_split, &mut rng, "min_samples_split")?,
            min_samples_leaf: pick(&space.min_samples_leaf, &mut rng, "min_samples_leaf")?,
            max_features: pick(&space.max_features, &mut rng, "max_features")?,
            bootstrap: true,
        };
        let forest = RandomForest::fit(&inner, hp, mix_seed(seed, t as u64), "")?;
        let correct = valid
            .rows()
            .zip(&valid.y)
            .filter(|(r, &y)| forest.predict(r) == (y == 1))
            .count();
        out.push(Trial {
            hyperparams: hp,
            correct,
            accuracy: correct as f64 / valid.n_rows as f64,
        });
    }
    let best = out
        .iter()
        .enumerate()
        .min_by_key(|(i, t)| {
            (
                std::cmp::Reverse(t.correct),
                t.hyperparams.n_estimators,
                depth_key(t.hyperparams.max_depth),
                *i,
            )
        })
        .map(|(_, t)| t.clone())
        .expect("trials is non-empty");
    Ok(SearchResult {
        best: best.hyperparams,
        best_accuracy: best.accuracy,
        trials: out,
    })
}
