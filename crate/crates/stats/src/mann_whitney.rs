use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest pooled sample size accepted by [`MwMode::Exact`].
pub const EXACT_MAX: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MwMode {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MwError {
    #[error("sample {0} is empty")]
    EmptySample(char),
    #[error("exact test needs at most {EXACT_MAX} values in total, got {0}")]
    TooLargeForExact(usize),
    #[error("sample contains a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwResult {
    pub u_x: f64,
    pub u_y: f64,
    /// Two-sided.
    pub p: f64,
}

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn mann_whitney_u(x: &[f64], y: &[f64], mode: MwMode) -> Result<MwResult, MwError> {
    if x.is_empty() {
        return Err(MwError::EmptySample('x'));
    }
    if y.is_empty() {
        return Err(MwError::EmptySample('y'));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MwError::NonFinite);
    }
    let (n1, n2) = (x.len(), y.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let base = (n1 * (n1 + 1)) as f64 / 2.0;
    let u_of = |rank_sum: f64| rank_sum - base;
    let u_x = u_of(ranks[..n1].iter().sum());
    let u_y = (n1 * n2) as f64 - u_x;
    let mu = (n1 * n2) as f64 / 2.0;
    let observed = (u_x - mu).abs();

    let p = match mode {
        MwMode::Exact => {
            if n > EXACT_MAX {
                return Err(MwError::TooLargeForExact(n));
            }
            let mut extreme = 0u64;
            let mut total = 0u64;
            let mut chosen = Vec::with_capacity(n1);
            each_subset(n, n1, 0, &mut chosen, &mut |pick| {
                total += 1;
                let s: f64 = pick.iter().map(|&i| ranks[i]).sum();
                if (u_of(s) - mu).abs() >= observed - 1e-9 {
                    extreme += 1;
                }
            });
            extreme as f64 / total as f64
        }
        MwMode::NormalApprox => {
            let mut sorted = pooled.clone();
            sorted.sort_by(f64::total_cmp);
            let mut tie_term = 0.0;
            let mut i = 0;
            while i < sorted.len() {
                let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
                let t = j as f64;
                tie_term += t * t * t - t;
                i += j;
            }
            let nf = n as f64;
            let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
            if var <= 0.0 {
                1.0
            } else {
                let z = ((observed - 0.5).max(0.0)) / var.sqrt();
                let normal = Normal::new(0.0, 1.0).expect("standard normal");
                (2.0 * (1.0 - normal.cdf(z))).min(1.0)
            }
        }
    };
    Ok(MwResult { u_x, u_y, p })
}

fn each_subset(n: usize, k: usize, start: usize, chosen: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    for i in start..=(n - (k - chosen.len())) {
        chosen.push(i);
        each_subset(n, k, i + 1, chosen, f);
        chosen.pop();
    }
}
