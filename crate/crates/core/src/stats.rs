//! Two-sample statistics for comparing campaign outcomes.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::classifier::midranks;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    Empty,
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("sample has zero variance")]
    ZeroVariance,
}

/// Largest pooled size handled by full enumeration.
pub const EXACT_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MwMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MannWhitney {
    /// U of the first sample: pairs where x beats y, ties counted half.
    pub u: f64,
    pub p_value: f64,
    pub method: MwMethod,
}

fn u_statistic(ranks: &[f64], n: usize) -> f64 {
    let r: f64 = ranks[..n].iter().sum();
    r - (n * (n + 1)) as f64 / 2.0
}

fn check(xs: &[f64], ys: &[f64]) -> Result<(), StatsError> {
    if xs.is_empty() || ys.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(())
}

/// Two-sided; exact for small samples, normal approximation otherwise.
pub fn mann_whitney(xs: &[f64], ys: &[f64]) -> Result<MannWhitney, StatsError> {
    if xs.len() + ys.len() <= EXACT_LIMIT {
        mann_whitney_exact(xs, ys)
    } else {
        mann_whitney_normal(xs, ys)
    }
}

/// Permutation p-value over every way of choosing |xs| of the pooled
/// midranks. Feasible up to about twenty values.
pub fn mann_whitney_exact(xs: &[f64], ys: &[f64]) -> Result<MannWhitney, StatsError> {
    check(xs, ys)?;
    let (n, m) = (xs.len(), ys.len());
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let ranks = midranks(&pooled);
    let u = u_statistic(&ranks, n);
    let centre = (n * m) as f64 / 2.0;
    let observed = (u - centre).abs() - 1e-9;

    let base = (n * (n + 1)) as f64 / 2.0;
    let (mut extreme, mut total) = (0u64, 0u64);
    // iterate n-subsets of pooled indices in lexicographic order
    let size = n + m;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let r: f64 = idx.iter().map(|&i| ranks[i]).sum();
        if (r - base - centre).abs() >= observed {
            extreme += 1;
        }
        total += 1;
        let Some(pos) = (0..n).rev().find(|&i| idx[i] != i + size - n) else {
            break;
        };
        idx[pos] += 1;
        for j in pos + 1..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
    Ok(MannWhitney {
        u,
        p_value: extreme as f64 / total as f64,
        method: MwMethod::Exact,
    })
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
pub fn mann_whitney_normal(xs: &[f64], ys: &[f64]) -> Result<MannWhitney, StatsError> {
    check(xs, ys)?;
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let ranks = midranks(&pooled);
    let u = u_statistic(&ranks, xs.len());
    let total = n + m;

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = n * m / 12.0 * ((total + 1.0) - ties / (total * (total - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - n * m / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::standard();
        (2.0 * (1.0 - normal.cdf(z))).min(1.0)
    };
    Ok(MannWhitney {
        u,
        p_value,
        method: MwMethod::Normal,
    })
}

/// P(x > y) + ½·P(x = y) over all pairs.
pub fn vargha_delaney_a12(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check(xs, ys)?;
    let mut wins = 0.0;
    for x in xs {
        for y in ys {
            if x > y {
                wins += 1.0;
            } else if x == y {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (xs.len() * ys.len()) as f64)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(StatsError::Empty);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StatResult {
    pub mann_whitney_u: f64,
    pub p_value: f64,
    pub a12: f64,
}

pub fn compare(xs: &[f64], ys: &[f64]) -> Result<StatResult, StatsError> {
    let mw = mann_whitney(xs, ys)?;
    Ok(StatResult {
        mann_whitney_u: mw.u,
        p_value: mw.p_value,
        a12: vargha_delaney_a12(xs, ys)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_triples() {
        let r = mann_whitney(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.p_value - 0.1).abs() < 1e-12);
        assert_eq!(r.method, MwMethod::Exact);
    }

    #[test]
    fn identical_samples() {
        let xs = [3.0, 1.0, 2.0, 2.0];
        assert_eq!(mann_whitney(&xs, &xs).unwrap().p_value, 1.0);
        let big: Vec<f64> = (0..20).map(f64::from).collect();
        assert_eq!(mann_whitney(&big, &big).unwrap().p_value, 1.0);
        assert_eq!(mann_whitney(&[5.0; 10], &[5.0; 10]).unwrap().p_value, 1.0);
    }

    #[test]
    fn a12_examples() {
        assert_eq!(vargha_delaney_a12(&[5.0, 6.0, 7.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(vargha_delaney_a12(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.5);
        assert_eq!(vargha_delaney_a12(&[], &[1.0]), Err(StatsError::Empty));
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[2.0, 3.0]), Err(StatsError::ZeroVariance));
    }
}

#[cfg(test)]
mod approximation {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_tracks_exact_at_the_switch_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for _ in 0..300 {
            let xs: Vec<f64> = (0..8).map(|_| f64::from(rng.random_range(0..40))).collect();
            let ys: Vec<f64> = (0..8).map(|_| f64::from(rng.random_range(0..40))).collect();
            let e = mann_whitney_exact(&xs, &ys).unwrap();
            let n = mann_whitney_normal(&xs, &ys).unwrap();
            assert_eq!(e.u, n.u);
            worst = worst.max((e.p_value - n.p_value).abs());
        }
        // measured 0.024 over these draws
        assert!(worst < 0.03, "worst gap {worst}");
    }
}
