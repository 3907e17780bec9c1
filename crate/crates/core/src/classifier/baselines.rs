//! Comparison classifiers: logistic regression, k-nearest neighbours and
//! Gaussian naive Bayes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::forest::check_two_classes;
use super::metrics::Classifier;
use super::ClassifierError;
use crate::features::FeatureMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BaselineKind {
    Logistic,
    Knn,
    GaussianNb,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Logistic, BaselineKind::Knn, BaselineKind::GaussianNb];
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Logistic => "logistic",
            BaselineKind::Knn => "knn",
            BaselineKind::GaussianNb => "gaussian-nb",
        })
    }
}

impl FromStr for BaselineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| format!("unknown baseline `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct BaselineParams {
    pub logistic_iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub k: usize,
    pub var_smoothing: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            logistic_iterations: 400,
            learning_rate: 0.5,
            l2: 1e-4,
            k: 5,
            var_smoothing: 1e-9,
        }
    }
}

fn col_stats<F: Scalar>(data: &FeatureMatrix<F>, rows: impl Iterator<Item = usize> + Clone) -> (Vec<f64>, Vec<f64>) {
    let d = data.n_cols;
    let mut mean = vec![0.0; d];
    let mut n = 0.0;
    for i in rows.clone() {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v.as_f64();
        }
        n += 1.0;
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for i in rows {
        for ((s, v), m) in var.iter_mut().zip(data.row(i)).zip(&mean) {
            *s += (v.as_f64() - m).powi(2);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// L2-regularized logistic regression on standardized features, fitted by
/// full-batch gradient descent from zero weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    mean: Vec<f64>,
    scale: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
}

impl Logistic {
    pub fn fit<F: Scalar>(data: &FeatureMatrix<F>, p: &BaselineParams) -> Result<Self, ClassifierError> {
        check_two_classes(&data.y)?;
        let (mean, var) = col_stats(data, 0..data.n_rows);
        let scale: Vec<f64> = var.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        let z: Vec<Vec<f64>> = data
            .rows()
            .map(|r| r.iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v.as_f64() - m) / s).collect())
            .collect();
        let n = data.n_rows as f64;
        let mut w = vec![0.0; data.n_cols];
        let mut b = 0.0;
        for _ in 0..p.logistic_iterations {
            let mut gw = vec![0.0; w.len()];
            let mut gb = 0.0;
            for (row, &y) in z.iter().zip(&data.y) {
                let err = sigmoid(dot(&w, row) + b) - f64::from(y);
                for (g, x) in gw.iter_mut().zip(row) {
                    *g += err * x;
                }
                gb += err;
            }
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= p.learning_rate * (g / n + p.l2 * *wi);
            }
            b -= p.learning_rate * gb / n;
        }
        Ok(Self {
            mean,
            scale,
            weights: w,
            bias: b,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<F: Scalar> Classifier<F> for Logistic {
    fn predict_proba(&self, row: &[F]) -> F {
        let z: f64 = row
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .zip(&self.weights)
            .map(|(((v, m), s), w)| w * (v.as_f64() - m) / s)
            .sum();
        F::of(sigmoid(z + self.bias))
    }
}

/// Brute-force Euclidean kNN on raw features; the score is the share of
/// positive neighbours. Distance ties go to the earlier training row.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn<F> {
    k: usize,
    train: FeatureMatrix<F>,
}

impl<F: Scalar> Knn<F> {
    pub fn fit(data: &FeatureMatrix<F>, p: &BaselineParams) -> Result<Self, ClassifierError> {
        check_two_classes(&data.y)?;
        if p.k == 0 {
            return Err(ClassifierError::Hyperparams("k must be >= 1".into()));
        }
        Ok(Self {
            k: p.k.min(data.n_rows),
            train: data.clone(),
        })
    }
}

impl<F: Scalar> Classifier<F> for Knn<F> {
    fn predict_proba(&self, row: &[F]) -> F {
        // sorted (distance, label) of the best k so far
        let mut best: Vec<(f64, u8)> = Vec::with_capacity(self.k + 1);
        for (i, t) in self.train.rows().enumerate() {
            let d: f64 = t.iter().zip(row).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
            if best.len() == self.k && d >= best[self.k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|(bd, _)| *bd <= d);
            best.insert(pos, (d, self.train.y[i]));
            best.truncate(self.k);
        }
        let hits = best.iter().filter(|(_, y)| *y == 1).count();
        F::of(hits as f64 / best.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    log_prior: [f64; 2],
    mean: [Vec<f64>; 2],
    var: [Vec<f64>; 2],
}

impl GaussianNb {
    pub fn fit<F: Scalar>(data: &FeatureMatrix<F>, p: &BaselineParams) -> Result<Self, ClassifierError> {
        check_two_classes(&data.y)?;
        let (_, all_var) = col_stats(data, 0..data.n_rows);
        let eps = p.var_smoothing * all_var.iter().cloned().fold(0.0, f64::max);
        let class = |c: u8| {
            let idx = (0..data.n_rows).filter(move |&i| data.y[i] == c);
            let n = idx.clone().count();
            let (m, mut v) = col_stats(data, idx);
            v.iter_mut().for_each(|x| *x += eps.max(f64::MIN_POSITIVE));
            (n, m, v)
        };
        let (n0, m0, v0) = class(0);
        let (n1, m1, v1) = class(1);
        let n = data.n_rows as f64;
        Ok(Self {
            log_prior: [(n0 as f64 / n).ln(), (n1 as f64 / n).ln()],
            mean: [m0, m1],
            var: [v0, v1],
        })
    }
}

impl<F: Scalar> Classifier<F> for GaussianNb {
    fn predict_proba(&self, row: &[F]) -> F {
        let ll = |c: usize| {
            self.log_prior[c]
                + row
                    .iter()
                    .zip(&self.mean[c])
                    .zip(&self.var[c])
                    .map(|((x, m), v)| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x.as_f64() - m).powi(2) / v))
                    .sum::<f64>()
        };
        let (l0, l1) = (ll(0), ll(1));
        F::of(sigmoid(l1 - l0))
    }
}

pub enum Baseline<F> {
    Logistic(Logistic),
    Knn(Knn<F>),
    GaussianNb(GaussianNb),
}

impl<F: Scalar> Baseline<F> {
    pub fn fit(kind: BaselineKind, data: &FeatureMatrix<F>, p: &BaselineParams) -> Result<Self, ClassifierError> {
        Ok(match kind {
            BaselineKind::Logistic => Baseline::Logistic(Logistic::fit(data, p)?),
            BaselineKind::Knn => Baseline::Knn(Knn::fit(data, p)?),
            BaselineKind::GaussianNb => Baseline::GaussianNb(GaussianNb::fit(data, p)?),
        })
    }
}

impl<F: Scalar> Classifier<F> for Baseline<F> {
    fn predict_proba(&self, row: &[F]) -> F {
        match self {
            Baseline::Logistic(m) => m.predict_proba(row),
            Baseline::Knn(m) => m.predict_proba(row),
            Baseline::GaussianNb(m) => m.predict_proba(row),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::metrics::evaluate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(n: usize, seed: u64) -> FeatureMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = (i % 2) as u8;
            let off = if c == 1 { 3.0 } else { -3.0 };
            rows.push(vec![off + rng.random::<f64>() - 0.5, off + rng.random::<f64>() - 0.5]);
            y.push(c);
        }
        FeatureMatrix::new(rows, y)
    }

    #[test]
    fn all_separate_blobs() {
        let train = blobs(200, 1);
        let test = blobs(100, 2);
        for kind in BaselineKind::ALL {
            let m = Baseline::fit(kind, &train, &BaselineParams::default()).unwrap();
            assert_eq!(evaluate(&m, &test).accuracy, Some(1.0), "{kind}");
        }
    }

    #[test]
    fn one_nn_memorizes() {
        let train = blobs(60, 3);
        let p = BaselineParams { k: 1, ..Default::default() };
        let m = Knn::fit(&train, &p).unwrap();
        assert_eq!(evaluate(&m, &train).accuracy, Some(1.0));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.to_string().parse::<BaselineKind>().unwrap(), k);
        }
    }
}
