//! Random forest of Gini-split binary decision trees.
//!
//! Candidate thresholds are midpoints between consecutive distinct feature
//! values. Split search works on per-feature bin indices so each node costs
//! one pass over its samples per candidate feature.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::metrics::Classifier;
use super::{ClassifierError, ModelError};
use crate::features::FeatureMatrix;
use crate::generator::mix_seed;
use crate::scalar::{total_cmp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => ((n_features as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::Count(k) => k.clamp(1, n_features.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ForestHyperparams {
    pub n_estimators: usize,
    /// `None` grows until another stopping rule fires. Config files may
    /// write `0` for the same thing.
    #[serde(deserialize_with = "depth_limit")]
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
}

fn depth_limit<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
    Ok(Option::<usize>::deserialize(d)?.filter(|&n| n > 0))
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: Some(10),
            min_samples_split: 2,
            min_samples_leaf: 10,
            max_features: MaxFeatures::All,
            bootstrap: true,
        }
    }
}

impl ForestHyperparams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::Hyperparams(m.to_string()));
        if self.n_estimators < 1 {
            return bad("n_estimators must be >= 1");
        }
        if self.min_samples_split < 2 {
            return bad("min_samples_split must be >= 2");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be >= 1");
        }
        if matches!(self.max_features, MaxFeatures::Count(0)) {
            return bad("max_features count must be >= 1");
        }
        Ok(())
    }
}

/// 1 − Σ pᵢ².
pub fn gini(counts: &[u64]) -> Result<f64, ClassifierError> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(ClassifierError::Empty);
    }
    let t = total as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>())
}

fn gini2(c: [u32; 2]) -> f64 {
    let t = f64::from(c[0] + c[1]);
    if t == 0.0 {
        return 0.0;
    }
    let (p0, p1) = (f64::from(c[0]) / t, f64::from(c[1]) / t);
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Node<F> {
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
        /// Weighted (failure, success) counts reaching the node.
        counts: [u32; 2],
    },
    Leaf {
        counts: [u32; 2],
    },
}

impl<F> Node<F> {
    pub fn counts(&self) -> [u32; 2] {
        match self {
            Node::Split { counts, .. } | Node::Leaf { counts } => *counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<F> {
    pub nodes: Vec<Node<F>>,
}

impl<F: Scalar> Tree<F> {
    fn leaf(&self, row: &[F]) -> [u32; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Success fraction of the leaf `row` lands in.
    pub fn predict_proba(&self, row: &[F]) -> F {
        let c = self.leaf(row);
        F::of(f64::from(c[1]) / f64::from(c[0] + c[1]))
    }

    pub fn depth(&self) -> usize {
        fn go<F>(nodes: &[Node<F>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    fn importances(&self, n_features: usize) -> Vec<f64> {
        let mut imp = vec![0.0; n_features];
        for node in &self.nodes {
            if let Node::Split {
                feature,
                left,
                right,
                counts,
                ..
            } = node
            {
                let w = |c: [u32; 2]| f64::from(c[0] + c[1]);
                let (l, r) = (self.nodes[*left].counts(), self.nodes[*right].counts());
                imp[*feature] += w(*counts) * gini2(*counts) - w(l) * gini2(l) - w(r) * gini2(r);
            }
        }
        normalize(&mut imp);
        imp
    }
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RandomForest<F> {
    pub hyperparams: ForestHyperparams,
    pub seed: u64,
    pub n_features: usize,
    pub schema_fingerprint: String,
    pub trees: Vec<Tree<F>>,
}

/// Column-wise sorted distinct values and each sample's position among them.
struct Binned<F> {
    values: Vec<Vec<F>>,
    bins: Vec<Vec<u32>>,
}

impl<F: Scalar> Binned<F> {
    fn new(data: &FeatureMatrix<F>) -> Self {
        let mut values = Vec::with_capacity(data.n_cols);
        let mut bins = Vec::with_capacity(data.n_cols);
        for j in 0..data.n_cols {
            let col: Vec<F> = (0..data.n_rows).map(|i| data.get(i, j)).collect();
            let mut uniq = col.clone();
            uniq.sort_by(total_cmp);
            uniq.dedup_by(|a, b| total_cmp(a, b) == Ordering::Equal);
            let b = col
                .iter()
                .map(|v| uniq.binary_search_by(|u| total_cmp(u, v)).expect("value present") as u32)
                .collect();
            values.push(uniq);
            bins.push(b);
        }
        Self { values, bins }
    }
}

struct Best {
    feature: usize,
    bin: u32,
    next_bin: u32,
    score: f64,
}

struct Grower<'a, F> {
    data: &'a Binned<F>,
    y: &'a [u8],
    weights: Vec<u32>,
    hp: ForestHyperparams,
    k_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Grower<'_, F> {
    fn counts(&self, samples: &[usize]) -> [u32; 2] {
        let mut c = [0u32; 2];
        for &i in samples {
            c[usize::from(self.y[i])] += self.weights[i];
        }
        c
    }

    fn best_split(&mut self, samples: &[usize], total: [u32; 2]) -> Option<Best> {
        let n_features = self.data.values.len();
        let mut order: Vec<usize> = (0..n_features).collect();
        order.shuffle(&mut self.rng);
        let min_leaf = self.hp.min_samples_leaf as u32;
        let n_total = total[0] + total[1];
        let mut best: Option<Best> = None;
        let mut hist: Vec<[u32; 2]> = Vec::new();
        let mut sparse: Vec<(u32, usize)> = Vec::new();
        for &f in order.iter().take(self.k_features) {
            let n_bins = self.data.values[f].len();
            if n_bins < 2 {
                continue;
            }
            let col = &self.data.bins[f];
            // (bin, class counts) in ascending bin order, only non-empty bins
            let cells: Vec<(u32, [u32; 2])> = if samples.len() * 4 < n_bins {
                sparse.clear();
                sparse.extend(samples.iter().map(|&i| (col[i], i)));
                sparse.sort_unstable();
                let mut out: Vec<(u32, [u32; 2])> = Vec::new();
                for &(b, i) in &sparse {
                    let cls = usize::from(self.y[i]);
                    match out.last_mut() {
                        Some((lb, c)) if *lb == b => c[cls] += self.weights[i],
                        _ => {
                            let mut c = [0; 2];
                            c[cls] = self.weights[i];
                            out.push((b, c));
                        }
                    }
                }
                out
            } else {
                hist.clear();
                hist.resize(n_bins, [0, 0]);
                for &i in samples {
                    hist[col[i] as usize][usize::from(self.y[i])] += self.weights[i];
                }
                hist.iter()
                    .enumerate()
                    .filter(|(_, c)| c[0] + c[1] > 0)
                    .map(|(b, c)| (b as u32, *c))
                    .collect()
            };
            let mut left = [0u32; 2];
            for w in cells.windows(2) {
                let (b, c) = w[0];
                left[0] += c[0];
                left[1] += c[1];
                let n_left = left[0] + left[1];
                let n_right = n_total - n_left;
                if n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let sq = |c: [u32; 2], n: u32| {
                    (f64::from(c[0]).powi(2) + f64::from(c[1]).powi(2)) / f64::from(n)
                };
                // maximizing this minimizes the weighted child impurity
                let score = sq(left, n_left) + sq(right, n_right);
                if best.as_ref().is_none_or(|bst| score > bst.score + 1e-12) {
                    best = Some(Best {
                        feature: f,
                        bin: b,
                        next_bin: w[1].0,
                        score,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, samples: &mut [usize], depth: usize) -> usize {
        let counts = self.counts(samples);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        let n = counts[0] + counts[1];
        let stop = self.hp.max_depth.is_some_and(|d| depth >= d)
            || (n as usize) < self.hp.min_samples_split
            || counts[0] == 0
            || counts[1] == 0;
        if stop {
            return id;
        }
        let Some(best) = self.best_split(samples, counts) else {
            return id;
        };
        let col = &self.data.bins[best.feature];
        let mut mid = 0;
        for i in 0..samples.len() {
            if col[samples[i]] <= best.bin {
                samples.swap(i, mid);
                mid += 1;
            }
        }
        let (ls, rs) = samples.split_at_mut(mid);
        let left = self.grow(ls, depth + 1);
        let right = self.grow(rs, depth + 1);
        let vals = &self.data.values[best.feature];
        let (a, b) = (vals[best.bin as usize], vals[best.next_bin as usize]);
        let mut threshold = a + (b - a) * F::half();
        if !(a <= threshold && threshold < b) {
            threshold = a;
        }
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold,
            left,
            right,
            counts,
        };
        id
    }
}

pub const MODEL_FORMAT: &str = "reqgate-forest";
pub const MODEL_FORMAT_VERSION: u32 = 1;

impl<F: Scalar> RandomForest<F> {
    pub fn fit(
        data: &FeatureMatrix<F>,
        hp: ForestHyperparams,
        seed: u64,
        schema_fingerprint: &str,
    ) -> Result<Self, ClassifierError> {
        hp.validate()?;
        check_two_classes(&data.y)?;
        let binned = Binned::new(data);
        let k = hp.max_features.resolve(data.n_cols);
        let n = data.n_rows;
        let trees = (0..hp.n_estimators as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, t));
                let mut weights = vec![0u32; n];
                if hp.bootstrap {
                    for _ in 0..n {
                        weights[rng.random_range(0..n)] += 1;
                    }
                } else {
                    weights.fill(1);
                }
                let mut samples: Vec<usize> = (0..n).filter(|&i| weights[i] > 0).collect();
                let mut g = Grower {
                    data: &binned,
                    y: &data.y,
                    weights,
                    hp,
                    k_features: k,
                    rng,
                    nodes: Vec::new(),
                };
                g.grow(&mut samples, 0);
                Tree { nodes: g.nodes }
            })
            .collect();
        Ok(Self {
            hyperparams: hp,
            seed,
            n_features: data.n_cols,
            schema_fingerprint: schema_fingerprint.to_string(),
            trees,
        })
    }

    /// Mean over trees of the leaf success fraction.
    pub fn try_predict_proba(&self, row: &[F]) -> Result<F, ClassifierError> {
        if row.len() != self.n_features {
            return Err(ClassifierError::RowLength {
                expected: self.n_features,
                found: row.len(),
            });
        }
        let sum: F = self.trees.iter().map(|t| t.predict_proba(row)).sum();
        Ok(sum / F::of_usize(self.trees.len()))
    }

    /// Mean decrease in impurity, per-tree normalized, averaged, renormalized.
    pub fn feature_importances(&self) -> Vec<F> {
        let mut acc = vec![0.0; self.n_features];
        for t in &self.trees {
            for (a, v) in acc.iter_mut().zip(t.importances(self.n_features)) {
                *a += v;
            }
        }
        normalize(&mut acc);
        acc.into_iter().map(F::of).collect()
    }

    pub fn check_schema(&self, fingerprint: &str) -> Result<(), ClassifierError> {
        if self.schema_fingerprint != fingerprint {
            return Err(ClassifierError::SchemaMismatch {
                expected: self.schema_fingerprint.clone(),
                found: fingerprint.to_string(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = serde_json::json!({
            "format": MODEL_FORMAT,
            "formatVersion": MODEL_FORMAT_VERSION,
            "model": self,
        });
        serde_json::to_string(&doc).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: Value = serde_json::from_str(text).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        if doc.get("format").and_then(Value::as_str) != Some(MODEL_FORMAT) {
            return Err(ModelError::Corrupt("not a forest model file".into()));
        }
        let version = doc.get("formatVersion").and_then(Value::as_u64);
        if version != Some(u64::from(MODEL_FORMAT_VERSION)) {
            return Err(ModelError::VersionMismatch {
                found: version,
                expected: MODEL_FORMAT_VERSION,
            });
        }
        let model = doc.get("model").cloned().ok_or_else(|| ModelError::Corrupt("missing model".into()))?;
        let model: Self = serde_json::from_value(model).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        model.check_structure()?;
        Ok(model)
    }

    fn check_structure(&self) -> Result<(), ModelError> {
        if self.trees.is_empty() {
            return Err(ModelError::Corrupt("no trees".into()));
        }
        for t in &self.trees {
            if t.nodes.is_empty() {
                return Err(ModelError::Corrupt("empty tree".into()));
            }
            for n in &t.nodes {
                match n {
                    Node::Split {
                        feature, left, right, ..
                    } if *feature >= self.n_features || *left >= t.nodes.len() || *right >= t.nodes.len() => {
                        return Err(ModelError::Corrupt("node index out of range".into()))
                    }
                    Node::Leaf { counts } if counts[0] + counts[1] == 0 => {
                        return Err(ModelError::Corrupt("empty leaf".into()))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()).map_err(ModelError::Io)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(ModelError::Io)?;
        Self::from_json(&text)
    }
}

impl<F: Scalar> Classifier<F> for RandomForest<F> {
    fn predict_proba(&self, row: &[F]) -> F {
        self.try_predict_proba(row).expect("row length matches model")
    }
}

pub(crate) fn check_two_classes(y: &[u8]) -> Result<(), ClassifierError> {
    if y.is_empty() {
        return Err(ClassifierError::Empty);
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(ClassifierError::SingleClass);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::metrics::evaluate;

    fn toy() -> FeatureMatrix<f64> {
        // y depends on feature 0 only; feature 1 is noise
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..400 {
            let a = (i % 20) as f64;
            rows.push(vec![a, rng.random_range(0..7) as f64]);
            y.push(u8::from(a >= 10.0));
        }
        FeatureMatrix::new(rows, y)
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[2, 2]).unwrap(), 0.5);
        assert_eq!(gini(&[4, 0]).unwrap(), 0.0);
        assert_eq!(gini(&[3, 1]).unwrap(), 0.375);
        assert!(gini(&[0, 0]).is_err());
    }

    #[test]
    fn memorizes_without_bootstrap() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.random(), rng.random(), rng.random()]).collect();
        let y: Vec<u8> = (0..300).map(|_| rng.random_range(0..2)).collect();
        let data = FeatureMatrix::new(rows, y);
        let hp = ForestHyperparams {
            n_estimators: 1,
            max_depth: None,
            min_samples_leaf: 1,
            bootstrap: false,
            ..Default::default()
        };
        let f = RandomForest::fit(&data, hp, 0, "").unwrap();
        assert_eq!(evaluate(&f, &data).accuracy, Some(1.0));
    }

    #[test]
    fn deterministic_and_order_invariant() {
        let data = toy();
        let a = RandomForest::fit(&data, ForestHyperparams { n_estimators: 10, ..Default::default() }, 5, "x").unwrap();
        let b = RandomForest::fit(&data, ForestHyperparams { n_estimators: 10, ..Default::default() }, 5, "x").unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let mut c = a.clone();
        c.trees.reverse();
        for r in data.rows() {
            assert!((a.predict_proba(r) - c.predict_proba(r)).abs() < 1e-12);
        }
    }

    #[test]
    fn importances_favour_the_signal() {
        let f = RandomForest::fit(&toy(), ForestHyperparams { n_estimators: 20, ..Default::default() }, 2, "").unwrap();
        let imp = f.feature_importances();
        assert!(imp[0] > imp[1]);
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let single = FeatureMatrix::new((0..50).map(|i| vec![i as f64]).collect(), (0..50).map(|i| u8::from(i > 20)).collect());
        let f = RandomForest::fit(&single, ForestHyperparams { n_estimators: 5, ..Default::default() }, 2, "").unwrap();
        assert_eq!(f.feature_importances(), vec![1.0]);
    }

    #[test]
    fn vote_fraction() {
        let leaf = |s: u32, f: u32| Tree { nodes: vec![Node::<f64>::Leaf { counts: [f, s] }] };
        let mut trees = vec![leaf(3, 0); 87];
        trees.extend(vec![leaf(0, 4); 13]);
        let forest = RandomForest {
            hyperparams: ForestHyperparams::default(),
            seed: 0,
            n_features: 1,
            schema_fingerprint: String::new(),
            trees,
        };
        assert!((forest.predict_proba(&[0.0]) - 0.87).abs() < 1e-12);
        assert!(forest.try_predict_proba(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn single_class_rejected() {
        let data = FeatureMatrix::new(vec![vec![1.0]; 4], vec![1; 4]);
        assert!(matches!(
            RandomForest::fit(&data, ForestHyperparams::default(), 0, ""),
            Err(ClassifierError::SingleClass)
        ));
    }

    #[test]
    fn model_file_round_trip_and_corruption() {
        let data = toy();
        let f = RandomForest::fit(&data, ForestHyperparams { n_estimators: 5, ..Default::default() }, 1, "abc").unwrap();
        let text = f.to_json();
        let back = RandomForest::<f64>::from_json(&text).unwrap();
        assert_eq!(back, f);
        assert!(matches!(RandomForest::<f64>::from_json(&text[..text.len() / 2]), Err(ModelError::Corrupt(_))));
        let bumped = text.replace("\"formatVersion\":1", "\"formatVersion\":99");
        assert!(matches!(RandomForest::<f64>::from_json(&bumped), Err(ModelError::VersionMismatch { .. })));
    }

    #[test]
    fn works_in_f32() {
        let d64 = toy();
        let d32 = FeatureMatrix::<f32>::new(d64.rows().map(|r| r.iter().map(|&v| v as f32).collect()).collect(), d64.y.clone());
        let f = RandomForest::fit(&d32, ForestHyperparams { n_estimators: 5, ..Default::default() }, 1, "").unwrap();
        assert!(evaluate(&f, &d32).accuracy.unwrap() > 0.95);
    }
}
