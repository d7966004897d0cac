//! Assigning rating items to fixed-size batches, balanced on text length
//! (median split per field) and approximately on quality labels.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BalanceItem {
    pub id: String,
    /// Length of each text field (context, doctor turn, responses...).
    pub field_lengths: Vec<usize>,
    pub quality: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    /// Item indices per batch.
    pub hits: Vec<Vec<usize>>,
    /// Whether each item fell in the upper half, per field.
    pub high: Vec<Vec<bool>>,
    /// Worst distance of a batch's high count from an even split, over fields.
    pub field_deviation: f64,
    /// Worst distance of a batch's quality count from the global ratio.
    pub quality_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BalanceError {
    #[error("need exactly {expected} items, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("items disagree on the number of fields or quality labels")]
    Ragged,
    #[error("exact length balance not reached (worst deviation {})", best.field_deviation)]
    InfeasibleExact { best: Box<Assignment> },
}

#[derive(Debug, Clone, Copy)]
pub struct BalanceConfig {
    pub seed: u64,
    pub max_iterations: usize,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig { seed: 0, max_iterations: 400_000 }
    }
}

/// Upper-half flags for one field; ties are broken by position so exactly
/// `n / 2` items are high.
pub fn median_split(lengths: &[usize]) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..lengths.len()).collect();
    idx.sort_by_key(|&i| (lengths[i], i));
    let mut high = vec![false; lengths.len()];
    for &i in &idx[lengths.len() - lengths.len() / 2..] {
        high[i] = true;
    }
    high
}

struct State<'a> {
    high: &'a [Vec<bool>],
    quality: &'a [Vec<bool>],
    field_target: f64,
    quality_target: Vec<f64>,
    high_count: Vec<Vec<i64>>,
    good_count: Vec<Vec<i64>>,
}

const FIELD_WEIGHT: f64 = 1000.0;

impl State<'_> {
    fn hit_cost(&self, h: usize) -> f64 {
        let f: f64 = self.high_count[h].iter().map(|&c| (c as f64 - self.field_target).powi(2)).sum();
        let q: f64 =
            self.good_count[h].iter().zip(&self.quality_target).map(|(&c, &t)| (c as f64 - t).powi(2)).sum();
        FIELD_WEIGHT * f + q
    }

    fn apply(&mut self, h: usize, item: usize, sign: i64) {
        for (f, &b) in self.high[item].iter().enumerate() {
            self.high_count[h][f] += sign * i64::from(b);
        }
        for (q, &b) in self.quality[item].iter().enumerate() {
            self.good_count[h][q] += sign * i64::from(b);
        }
    }

    fn deviations(&self) -> (f64, f64) {
        let field = self.high_count.iter().flatten().map(|&c| (c as f64 - self.field_target).abs()).fold(0.0, f64::max);
        let quality = self
            .good_count
            .iter()
            .flat_map(|row| row.iter().zip(&self.quality_target).map(|(&c, &t)| (c as f64 - t).abs()))
            .fold(0.0, f64::max);
        (field, quality)
    }
}

pub fn balance_hits(
    items: &[BalanceItem],
    n_hits: usize,
    per_hit: usize,
    config: BalanceConfig,
) -> Result<Assignment, BalanceError> {
    let n = n_hits * per_hit;
    if items.len() != n || n == 0 {
        return Err(BalanceError::SizeMismatch { expected: n, got: items.len() });
    }
    let fields = items[0].field_lengths.len();
    let labels = items[0].quality.len();
    if items.iter().any(|i| i.field_lengths.len() != fields || i.quality.len() != labels) {
        return Err(BalanceError::Ragged);
    }
    let split: Vec<Vec<bool>> =
        (0..fields).map(|f| median_split(&items.iter().map(|i| i.field_lengths[f]).collect::<Vec<_>>())).collect();
    let high: Vec<Vec<bool>> = (0..n).map(|i| split.iter().map(|col| col[i]).collect()).collect();
    let quality: Vec<Vec<bool>> = items.iter().map(|i| i.quality.clone()).collect();
    let quality_target: Vec<f64> = (0..labels)
        .map(|q| quality.iter().filter(|l| l[q]).count() as f64 / n as f64 * per_hit as f64)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut hit_of = vec![0usize; n];
    let mut slots: Vec<Vec<usize>> = order.chunks(per_hit).map(<[usize]>::to_vec).collect();
    for (h, members) in slots.iter().enumerate() {
        for &i in members {
            hit_of[i] = h;
        }
    }
    let mut state = State {
        high: &high,
        quality: &quality,
        field_target: per_hit as f64 / 2.0,
        quality_target,
        high_count: vec![vec![0; fields]; n_hits],
        good_count: vec![vec![0; labels]; n_hits],
    };
    for (i, &h) in hit_of.iter().enumerate() {
        state.apply(h, i, 1);
    }

    let done = |s: &State| {
        let (f, q) = s.deviations();
        f <= 0.5 && q <= 1.0
    };
    let mut iterations = 0;
    while n_hits > 1 && iterations < config.max_iterations && !done(&state) {
        iterations += 1;
        let (h1, h2) = (rng.random_range(0..n_hits), rng.random_range(0..n_hits));
        if h1 == h2 {
            continue;
        }
        let (s1, s2) = (rng.random_range(0..per_hit), rng.random_range(0..per_hit));
        let (a, b) = (slots[h1][s1], slots[h2][s2]);
        let before = state.hit_cost(h1) + state.hit_cost(h2);
        state.apply(h1, a, -1);
        state.apply(h2, b, -1);
        state.apply(h1, b, 1);
        state.apply(h2, a, 1);
        let after = state.hit_cost(h1) + state.hit_cost(h2);
        if after <= before {
            slots[h1][s1] = b;
            slots[h2][s2] = a;
        } else {
            state.apply(h1, b, -1);
            state.apply(h2, a, -1);
            state.apply(h1, a, 1);
            state.apply(h2, b, 1);
        }
    }

    let (field_deviation, quality_deviation) = state.deviations();
    for hit in &mut slots {
        hit.sort_unstable();
    }
    let assignment = Assignment { hits: slots, high, field_deviation, quality_deviation };
    if field_deviation > 0.0 {
        return Err(BalanceError::InfeasibleExact { best: Box::new(assignment) });
    }
    Ok(assignment)
}
