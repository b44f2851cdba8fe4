//! Estimates with error bars: batch means for chain output and a batch
//! jackknife for smooth functions of several running means.

use serde::Serialize;

use crate::error::{GilError, Result};

/// Fewest batches any chain estimate is built from.
pub const MIN_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Chain,
    Oracle,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Chain => "chain",
            Method::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_effective: f64,
    pub method: Method,
}

impl Estimate {
    pub fn exact(value: f64, method: Method) -> Self {
        Estimate { value, std_error: 0.0, n_effective: f64::INFINITY, method }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("estimate serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixEstimate {
    pub value: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
    pub n_effective: f64,
    pub method: Method,
}

impl MatrixEstimate {
    pub fn dim(&self) -> usize {
        self.value.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> Estimate {
        Estimate { value: self.value[i][j], std_error: self.std_error[i][j], n_effective: self.n_effective, method: self.method }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexEstimate {
    pub re: Estimate,
    pub im: Estimate,
    pub modulus: Estimate,
}

/// Observable rows grouped into equal batches. Rows that do not fill a
/// whole batch at the end of a chain are dropped.
#[derive(Debug, Clone)]
pub struct Batches {
    n_obs: usize,
    /// per-batch means, batch-major
    means: Vec<f64>,
    n_batches: usize,
    batch_len: usize,
    /// per-observable variance of single rows
    row_var: Vec<f64>,
}

impl Batches {
    /// `chains` holds one flat row-major series per chain, `n_obs` values per row.
    pub fn from_chains(chains: &[Vec<f64>], n_obs: usize, batches_per_chain: usize) -> Result<Self> {
        if n_obs == 0 || chains.is_empty() || batches_per_chain == 0 {
            return Err(GilError::Precondition("empty observable series".into()));
        }
        let rows = chains.iter().map(|c| c.len() / n_obs).min().unwrap_or(0);
        let batch_len = rows / batches_per_chain;
        let n_batches = batches_per_chain * chains.len();
        if batch_len == 0 {
            return Err(GilError::Precondition(format!("{rows} rows per chain cannot fill {batches_per_chain} batches")));
        }
        if n_batches < MIN_BATCHES {
            return Err(GilError::Precondition(format!("{n_batches} batches, need at least {MIN_BATCHES}")));
        }
        let mut means = Vec::with_capacity(n_batches * n_obs);
        let mut sum = vec![0.0; n_obs];
        let mut sum_sq = vec![0.0; n_obs];
        // shift by the first row against cancellation in near-constant series
        let shift: Vec<f64> = chains[0][..n_obs].to_vec();
        for chain in chains {
            for b in 0..batches_per_chain {
                let mut acc = vec![0.0; n_obs];
                for r in b * batch_len..(b + 1) * batch_len {
                    let row = &chain[r * n_obs..(r + 1) * n_obs];
                    for k in 0..n_obs {
                        let x = row[k] - shift[k];
                        acc[k] += x;
                        sum[k] += x;
                        sum_sq[k] += x * x;
                    }
                }
                means.extend(acc.iter().zip(&shift).map(|(a, s)| a / batch_len as f64 + s));
            }
        }
        let n = (n_batches * batch_len) as f64;
        let row_var = (0..n_obs)
            .map(|k| {
                let m = sum[k] / n;
                ((sum_sq[k] / n - m * m) * n / (n - 1.0).max(1.0)).max(0.0)
            })
            .collect();
        Ok(Batches { n_obs, means, n_batches, batch_len, row_var })
    }

    pub fn n_batches(&self) -> usize {
        self.n_batches
    }

    pub fn n_rows(&self) -> usize {
        self.n_batches * self.batch_len
    }

    fn batch(&self, b: usize) -> &[f64] {
        &self.means[b * self.n_obs..(b + 1) * self.n_obs]
    }

    /// Grand mean of every observable.
    pub fn means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_obs];
        for b in 0..self.n_batches {
            for (acc, v) in m.iter_mut().zip(self.batch(b)) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.n_batches as f64);
        m
    }

    /// Batch-means error of observable `k` alone.
    pub fn mean_of(&self, k: usize, method: Method) -> Estimate {
        let m = self.means()[k];
        let nb = self.n_batches as f64;
        let var_b = (0..self.n_batches).map(|b| (self.batch(b)[k] - m).powi(2)).sum::<f64>() / (nb - 1.0);
        let se = (var_b / nb).sqrt();
        Estimate { value: m, std_error: se, n_effective: self.effective(k, var_b), method }
    }

    fn effective(&self, k: usize, var_b: f64) -> f64 {
        let n = self.n_rows() as f64;
        if var_b <= 0.0 || self.row_var[k] <= 0.0 {
            return n;
        }
        // integrated autocorrelation time from batch variance
        let tau = (self.batch_len as f64 * var_b / self.row_var[k]).max(1.0);
        n / tau
    }

    /// Smallest effective sample size over all observables.
    pub fn n_effective(&self) -> f64 {
        let m = self.means();
        let nb = self.n_batches as f64;
        (0..self.n_obs)
            .map(|k| {
                let var_b = (0..self.n_batches).map(|b| (self.batch(b)[k] - m[k]).powi(2)).sum::<f64>() / (nb - 1.0);
                self.effective(k, var_b)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Jackknife over batches of `stat` applied to leave-one-out grand means.
    pub fn jackknife<F: Fn(&[f64]) -> f64>(&self, method: Method, stat: F) -> Estimate {
        let full = self.means();
        let value = stat(&full);
        let nb = self.n_batches as f64;
        let mut loo = vec![0.0; self.n_obs];
        let thetas: Vec<f64> = (0..self.n_batches)
            .map(|b| {
                for (k, l) in loo.iter_mut().enumerate() {
                    *l = (full[k] * nb - self.batch(b)[k]) / (nb - 1.0);
                }
                stat(&loo)
            })
            .collect();
        let bar = thetas.iter().sum::<f64>() / nb;
        let var = thetas.iter().map(|t| (t - bar).powi(2)).sum::<f64>() * (nb - 1.0) / nb;
        Estimate { value, std_error: var.sqrt(), n_effective: self.n_effective(), method }
    }
}

/// −log of the mean of exp(−x_j), shifted by the smallest x.
pub fn neg_log_mean_exp(xs: &[f64]) -> Result<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    if !lo.is_finite() {
        return Err(GilError::WeightUnderflow);
    }
    let s: f64 = xs.iter().map(|x| (lo - x).exp()).sum();
    if !(s > 0.0 && s.is_finite()) {
        return Err(GilError::WeightUnderflow);
    }
    Ok(lo - (s / xs.len() as f64).ln())
}

/// Jackknife estimate of −log E[exp(−X)] over `n_batches` contiguous batches.
pub fn jackknife_neg_log_mean_exp(xs: &[f64], n_batches: usize, method: Method) -> Result<Estimate> {
    if n_batches < MIN_BATCHES || xs.len() < n_batches {
        return Err(GilError::Precondition(format!("need at least {MIN_BATCHES} batches and one sample per batch")));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    if !lo.is_finite() {
        return Err(GilError::WeightUnderflow);
    }
    let len = xs.len() / n_batches;
    let sums: Vec<f64> = xs[..len * n_batches].chunks(len).map(|c| c.iter().map(|x| (lo - x).exp()).sum()).collect();
    let total: f64 = sums.iter().sum();
    let n = (len * n_batches) as f64;
    if !(total > 0.0) {
        return Err(GilError::WeightUnderflow);
    }
    let value = lo - (total / n).ln();
    let nb = n_batches as f64;
    let thetas: Vec<f64> = sums.iter().map(|s| lo - ((total - s) / (n - len as f64)).ln()).collect();
    let bar = thetas.iter().sum::<f64>() / nb;
    let var = thetas.iter().map(|t| (t - bar).powi(2)).sum::<f64>() * (nb - 1.0) / nb;
    if !var.is_finite() {
        return Err(GilError::WeightUnderflow);
    }
    // Kish effective size of the weights
    let sum_sq: f64 = xs[..len * n_batches].iter().map(|x| (2.0 * (lo - x)).exp()).sum();
    Ok(Estimate { value, std_error: var.sqrt(), n_effective: total * total / sum_sq, method })
}

/// Smallest eigenvalue of a symmetric matrix given as rows.
pub fn min_eigenvalue(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (m[i][j] + m[j][i]));
    nalgebra::SymmetricEigen::new(mat).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
