//! Distance statistics, exact disjunctness, and cover diagnostics.
//!
//! The average distance `d_avg` is the minimum over codewords x of the mean
//! distance from x to every codeword, x itself included. `mean_pairwise` and
//! `second_moment` average over all N^2 ordered pairs, self-pairs included.

use num_rational::Ratio;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use crate::concat::TestMatrix;
use crate::error::{Error, Result};
use crate::rng::{sample_subset, trial_rng, wilson_95};

/// Exact statistics are refused beyond N^2 * words_per_column word operations.
pub const EXACT_STATS_BUDGET: u128 = 1 << 32;

/// Exhaustive disjunctness is refused beyond this many cover checks.
pub const DISJUNCT_BUDGET: u128 = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum StatsMode {
    Exact,
    Sampled { pairs: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceStats {
    pub n: usize,
    /// `None` for a single-column matrix.
    pub d_min: Option<usize>,
    pub d_avg: Ratio<u128>,
    pub mean_pairwise: Ratio<u128>,
    pub second_moment: Ratio<u128>,
    pub exact: bool,
}

impl DistanceStats {
    pub fn d_avg_f64(&self) -> f64 {
        ratio_f64(&self.d_avg)
    }

    pub fn mean_pairwise_f64(&self) -> f64 {
        ratio_f64(&self.mean_pairwise)
    }

    pub fn second_moment_f64(&self) -> f64 {
        ratio_f64(&self.second_moment)
    }
}

pub fn ratio_f64(r: &Ratio<u128>) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

struct RowSummary {
    sum: u128,
    sum_sq: u128,
    min_other: Option<usize>,
}

fn row_summary(matrix: &TestMatrix, x: usize) -> RowSummary {
    let words = matrix.words_per_column();
    let cx = matrix.column(x);
    // u64 accumulators: n * M^2 stays far below 2^64 for anything within budget
    let (mut sum, mut sum_sq, mut min_other) = (0u64, 0u64, u64::MAX);
    let mut visit = |y: usize, d: u64| {
        sum += d;
        sum_sq += d * d;
        if y != x && d < min_other {
            min_other = d;
        }
    };
    if words == 1 {
        let a = cx[0];
        for (y, c) in matrix.packed_columns().iter().enumerate() {
            visit(y, (a ^ c).count_ones() as u64);
        }
    } else {
        for (y, c) in matrix.packed_columns().chunks_exact(words).enumerate() {
            visit(y, cx.iter().zip(c).map(|(a, b)| (a ^ b).count_ones() as u64).sum());
        }
    }
    RowSummary {
        sum: sum as u128,
        sum_sq: sum_sq as u128,
        min_other: (min_other != u64::MAX).then_some(min_other as usize),
    }
}

pub fn distance_stats(matrix: &TestMatrix, mode: StatsMode) -> Result<DistanceStats> {
    let n = matrix.cols();
    if n == 0 {
        return Err(Error::InvalidInput("matrix has no columns".into()));
    }
    match mode {
        StatsMode::Exact => {
            let needed = (n as u128).pow(2) * matrix.words_per_column().max(1) as u128;
            if needed > EXACT_STATS_BUDGET {
                return Err(Error::BudgetExceeded {
                    needed,
                    budget: EXACT_STATS_BUDGET,
                });
            }
            let rows: Vec<RowSummary> = (0..n)
                .into_par_iter()
                .map(|x| row_summary(matrix, x))
                .collect();
            let n2 = (n as u128).pow(2);
            Ok(DistanceStats {
                n,
                d_min: rows.iter().filter_map(|r| r.min_other).min(),
                d_avg: Ratio::new(rows.iter().map(|r| r.sum).min().unwrap(), n as u128),
                mean_pairwise: Ratio::new(rows.iter().map(|r| r.sum).sum(), n2),
                second_moment: Ratio::new(rows.iter().map(|r| r.sum_sq).sum(), n2),
                exact: true,
            })
        }
        StatsMode::Sampled { pairs, seed } => {
            if pairs == 0 {
                return Err(Error::InvalidParams("sampled mode needs at least one pair".into()));
            }
            let (sum, sum_sq) = (0..pairs)
                .into_par_iter()
                .map(|i| {
                    let mut rng = trial_rng(seed, i);
                    let x = rand::Rng::gen_range(&mut rng, 0..n);
                    let y = rand::Rng::gen_range(&mut rng, 0..n);
                    let d = matrix.distance(x, y) as u128;
                    (d, d * d)
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            let row_count = ((pairs / n as u64) as usize).clamp(1, n);
            let sampled_rows = sample_subset(n, row_count, &mut trial_rng(seed, u64::MAX));
            let rows: Vec<RowSummary> = sampled_rows
                .par_iter()
                .map(|&x| row_summary(matrix, x))
                .collect();
            Ok(DistanceStats {
                n,
                d_min: rows.iter().filter_map(|r| r.min_other).min(),
                d_avg: Ratio::new(rows.iter().map(|r| r.sum).min().unwrap(), n as u128),
                mean_pairwise: Ratio::new(sum, pairs as u128),
                second_moment: Ratio::new(sum_sq, pairs as u128),
                exact: false,
            })
        }
    }
}

/// Bitwise OR of the listed columns.
pub fn union_of(matrix: &TestMatrix, set: &[usize]) -> Vec<u64> {
    let mut acc = vec![0u64; matrix.words_per_column()];
    for &j in set {
        for (a, c) in acc.iter_mut().zip(matrix.column(j)) {
            *a |= c;
        }
    }
    acc
}

/// supp(column i) is inside the support given by `union`.
#[inline]
pub fn covered_by(matrix: &TestMatrix, union: &[u64], i: usize) -> bool {
    matrix
        .column(i)
        .iter()
        .zip(union)
        .all(|(c, u)| c & !u == 0)
}

/// supp(column i) is inside the union of the supports of the columns in `set`.
pub fn is_covered(matrix: &TestMatrix, set: &[usize], i: usize) -> bool {
    covered_by(matrix, &union_of(matrix, set), i)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Disjunctness {
    Disjunct,
    /// Lexicographically first (set, item) with the item covered.
    NotDisjunct { set: Vec<usize>, item: usize },
}

impl Disjunctness {
    pub fn holds(&self) -> bool {
        matches!(self, Disjunctness::Disjunct)
    }
}

fn binomial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Advances `comb` to the next k-combination of 0..n in lexicographic order.
fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    for pos in (0..k).rev() {
        if comb[pos] < n - k + pos {
            comb[pos] += 1;
            for p in pos + 1..k {
                comb[p] = comb[p - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Calls `visit` on every t-subset of 0..n starting with `first`, in
/// lexicographic order, stopping early when it returns `Some`.
fn scan_sets_from<T>(
    n: usize,
    t: usize,
    first: usize,
    mut visit: impl FnMut(&[usize]) -> Option<T>,
) -> Option<T> {
    if t == 0 {
        return if first == 0 { visit(&[]) } else { None };
    }
    if first + t > n {
        return None;
    }
    let mut comb: Vec<usize> = (first..first + t).collect();
    loop {
        if let Some(found) = visit(&comb) {
            return Some(found);
        }
        if !next_combination(&mut comb, n) || comb[0] != first {
            return None;
        }
    }
}

/// Smallest column outside `set` covered by the union of `set`, if any.
pub fn first_covered(matrix: &TestMatrix, set: &[usize]) -> Option<usize> {
    let union = union_of(matrix, set);
    (0..matrix.cols()).find(|i| !set.contains(i) && covered_by(matrix, &union, *i))
}

pub fn is_t_disjunct(matrix: &TestMatrix, t: usize) -> Result<Disjunctness> {
    is_t_disjunct_with_budget(matrix, t, DISJUNCT_BUDGET)
}

pub fn is_t_disjunct_with_budget(matrix: &TestMatrix, t: usize, budget: u128) -> Result<Disjunctness> {
    let n = matrix.cols();
    if t >= n {
        return Ok(Disjunctness::Disjunct);
    }
    let needed = (n as u128).saturating_mul(binomial_u128(n - 1, t));
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let starts = if t == 0 { 1 } else { n - t + 1 };
    let witness = (0..starts).into_par_iter().find_map_first(|first| {
        scan_sets_from(n, t, first, |set| {
            first_covered(matrix, set).map(|i| (set.to_vec(), i))
        })
    });
    Ok(match witness {
        None => Disjunctness::Disjunct,
        Some((set, item)) => Disjunctness::NotDisjunct { set, item },
    })
}

/// Exact count of t-subsets S for which some i outside S is covered.
/// Returns (failing subsets, all subsets).
pub fn covered_subset_count(matrix: &TestMatrix, t: usize) -> Result<(u128, u128)> {
    let n = matrix.cols();
    if t >= n {
        return Err(Error::InvalidParams(format!("need t < N (t={t}, N={n})")));
    }
    let total = binomial_u128(n, t);
    let needed = total.saturating_mul((n - t) as u128);
    if needed > DISJUNCT_BUDGET {
        return Err(Error::BudgetExceeded {
            needed,
            budget: DISJUNCT_BUDGET,
        });
    }
    let starts = if t == 0 { 1 } else { n - t + 1 };
    let failing: u128 = (0..starts)
        .into_par_iter()
        .map(|first| {
            let mut count = 0u128;
            scan_sets_from::<()>(n, t, first, |set| {
                count += first_covered(matrix, set).is_some() as u128;
                None
            });
            count
        })
        .sum();
    Ok((failing, total))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonEstimate {
    pub t: usize,
    pub trials: u64,
    pub failures: u64,
    pub failure_rate: f64,
    pub wilson_95: (f64, f64),
    pub seed: u64,
}

/// Monte Carlo estimate of the fraction of uniform t-subsets whose union
/// covers some other column.
pub fn estimate_epsilon(matrix: &TestMatrix, t: usize, trials: u64, seed: u64) -> Result<EpsilonEstimate> {
    let n = matrix.cols();
    if t >= n || trials == 0 {
        return Err(Error::InvalidParams(format!(
            "need t < N and trials >= 1 (t={t}, N={n}, trials={trials})"
        )));
    }
    let failures: u64 = (0..trials)
        .into_par_iter()
        .map(|i| {
            let set = sample_subset(n, t, &mut trial_rng(seed, i));
            first_covered(matrix, &set).is_some() as u64
        })
        .sum();
    Ok(EpsilonEstimate {
        t,
        trials,
        failures,
        failure_rate: failures as f64 / trials as f64,
        wilson_95: wilson_95(failures, trials),
        seed,
    })
}

/// Sum over j in `set` of (w - d(col_i, col_j)/2): the most of column i's
/// support that the set can cover. Below w means column i is not covered.
pub fn cover_margin(matrix: &TestMatrix, set: &[usize], i: usize) -> Result<usize> {
    let w = matrix.constant_weight().ok_or(Error::NotConstantWeight)?;
    Ok(set
        .iter()
        .map(|&j| {
            let d = matrix.distance(i, j);
            debug_assert!(d % 2 == 0, "equal-weight columns are at even distance");
            w - d / 2
        })
        .sum())
}
