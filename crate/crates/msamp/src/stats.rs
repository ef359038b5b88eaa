//! Batch-means accumulators for Monte-Carlo estimates.
//!
//! Estimators are computed per batch (each batch on its own RNG substream)
//! and merged in fixed batch order, which keeps every result independent of
//! thread count. Standard errors come from the spread of the batch values.
//!
//! Matrix-valued checks aggregate per matrix: the gate compares
//! ‖mean difference‖_F against a multiple of sqrt(Σ entries SE²). Gating
//! every entry at 3σ separately would false-alarm routinely once a test
//! touches hundreds of entries.

use crate::linalg::CMat;

#[derive(Debug, Clone)]
pub struct MatrixStat {
    pub mean: CMat,
    /// sqrt(Σ over entries of the squared standard error of that entry)
    pub se_frob: f64,
    pub batches: usize,
}

impl MatrixStat {
    pub fn from_batches(batches: &[CMat]) -> Self {
        let k = batches.len();
        assert!(k >= 2, "need at least two batches for a standard error");
        let (r, c) = (batches[0].nrows(), batches[0].ncols());
        let mut mean = CMat::zeros(r, c);
        for b in batches {
            mean += b;
        }
        mean = mean.unscale(k as f64);
        let mut var_sum = 0.0;
        for i in 0..r {
            for j in 0..c {
                let (mut vre, mut vim) = (0.0, 0.0);
                for b in batches {
                    let d = b[(i, j)] - mean[(i, j)];
                    vre += d.re * d.re;
                    vim += d.im * d.im;
                }
                // sample variance of the batch means -> variance of the pooled mean
                var_sum += (vre + vim) / ((k - 1) as f64) / (k as f64);
            }
        }
        MatrixStat {
            mean,
            se_frob: var_sum.sqrt(),
            batches: k,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScalarStat {
    pub mean: f64,
    pub se: f64,
}

impl ScalarStat {
    pub fn from_batches(values: &[f64]) -> Self {
        let k = values.len();
        assert!(k >= 2);
        let mean = values.iter().sum::<f64>() / k as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ((k - 1) as f64);
        ScalarStat {
            mean,
            se: (var / k as f64).sqrt(),
        }
    }
}

/// Empirical rate and its binomial standard error.
pub fn rate_with_se(hits: usize, total: usize) -> Option<ScalarStat> {
    if total == 0 {
        return None;
    }
    let p = hits as f64 / total as f64;
    let se = (p * (1.0 - p) / total as f64).sqrt();
    Some(ScalarStat { mean: p, se })
}

/// Split a sample count into `batches` contiguous ranges covering 0..n.
pub fn batch_ranges(n: usize, batches: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / batches;
    let rem = n % batches;
    let mut out = Vec::with_capacity(batches);
    let mut start = 0;
    for b in 0..batches {
        let len = base + usize::from(b < rem);
        out.push(start..start + len);
        start += len;
    }
    out
}
