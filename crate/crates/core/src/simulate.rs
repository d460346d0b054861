//! Random defective sets, OR-test outcomes, the cover decoder and seeded
//! recovery experiments.

use rand::distributions::{Bernoulli, Distribution};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{covered_by, first_covered, union_of};
use crate::concat::TestMatrix;
use crate::error::{Error, Result};
use crate::rng::{sample_subset, trial_rng, wilson_95};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    /// Each item defective independently with probability t/N.
    Model1,
    /// A uniformly random t-subset.
    Model2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DefectiveModel {
    pub kind: DefectKind,
    pub n: usize,
    pub t: usize,
}

impl DefectiveModel {
    pub fn new(kind: DefectKind, n: usize, t: usize) -> Result<Self> {
        if t < 1 || t > n || (kind == DefectKind::Model1 && t == n) {
            return Err(Error::InvalidParams(format!("need 1 <= t < N (t={t}, N={n})")));
        }
        Ok(DefectiveModel { kind, n, t })
    }
}

/// Sorted defective set.
pub fn draw_defectives<R: Rng>(model: &DefectiveModel, rng: &mut R) -> Vec<usize> {
    match model.kind {
        DefectKind::Model1 => {
            let coin = Bernoulli::from_ratio(model.t as u32, model.n as u32).expect("t <= N");
            (0..model.n).filter(|_| coin.sample(rng)).collect()
        }
        DefectKind::Model2 => sample_subset(model.n, model.t, rng),
    }
}

/// Packed outcome vector: the OR of the defective columns.
pub fn test_outcomes(matrix: &TestMatrix, set: &[usize]) -> Vec<u64> {
    union_of(matrix, set)
}

/// Every item that never appears in a negative test, i.e. whose column lies
/// inside the positive outcomes.
pub fn naive_decode(matrix: &TestMatrix, y: &[u64]) -> Vec<usize> {
    (0..matrix.cols()).filter(|&j| covered_by(matrix, y, j)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialReport {
    pub model: DefectiveModel,
    pub trials: u64,
    pub seed: u64,
    pub exact_recoveries: u64,
    pub failures: u64,
    pub failure_rate: f64,
    pub wilson_95: (f64, f64),
    pub total_false_positives: u64,
    pub mean_false_positives: f64,
    pub max_false_positives: u64,
    pub mean_defectives: f64,
    /// histogram[s] = number of trials with |S| = s.
    pub defective_histogram: Vec<u64>,
    /// Both must stay zero: decoded sets always contain S, and a trial fails
    /// exactly when some non-defective column is covered.
    pub false_negatives: u64,
    pub equivalence_violations: u64,
}

#[derive(Default)]
struct Tally {
    exact: u64,
    false_positives: u64,
    max_false_positives: u64,
    defectives: u64,
    histogram: Vec<u64>,
    false_negatives: u64,
    violations: u64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.exact += other.exact;
        self.false_positives += other.false_positives;
        self.max_false_positives = self.max_false_positives.max(other.max_false_positives);
        self.defectives += other.defectives;
        if self.histogram.len() < other.histogram.len() {
            self.histogram.resize(other.histogram.len(), 0);
        }
        for (a, b) in self.histogram.iter_mut().zip(other.histogram) {
            *a += b;
        }
        self.false_negatives += other.false_negatives;
        self.violations += other.violations;
        self
    }
}

fn one_trial(matrix: &TestMatrix, model: &DefectiveModel, seed: u64, index: u64) -> Tally {
    let set = draw_defectives(model, &mut trial_rng(seed, index));
    let decoded = naive_decode(matrix, &test_outcomes(matrix, &set));
    let hits = decoded.iter().filter(|j| set.binary_search(j).is_ok()).count();
    let false_positives = (decoded.len() - hits) as u64;
    let failed = false_positives > 0;
    let cover = first_covered(matrix, &set).is_some();
    let mut histogram = vec![0; set.len() + 1];
    histogram[set.len()] = 1;
    Tally {
        exact: (!failed) as u64,
        false_positives,
        max_false_positives: false_positives,
        defectives: set.len() as u64,
        histogram,
        false_negatives: (set.len() - hits) as u64,
        violations: (failed != cover) as u64,
    }
}

/// Runs `trials` independent trials; trial i draws from stream i of `seed`,
/// so the report does not depend on thread count or scheduling.
pub fn run_experiment(matrix: &TestMatrix, model: &DefectiveModel, trials: u64, seed: u64) -> Result<TrialReport> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    if model.n != matrix.cols() {
        return Err(Error::InvalidParams(format!(
            "model has N = {} items but the matrix has {} columns",
            model.n,
            matrix.cols()
        )));
    }
    let tally = (0..trials)
        .into_par_iter()
        .map(|i| one_trial(matrix, model, seed, i))
        .reduce(Tally::default, Tally::merge);
    let failures = trials - tally.exact;
    Ok(TrialReport {
        model: *model,
        trials,
        seed,
        exact_recoveries: tally.exact,
        failures,
        failure_rate: failures as f64 / trials as f64,
        wilson_95: wilson_95(failures, trials),
        total_false_positives: tally.false_positives,
        mean_false_positives: tally.false_positives as f64 / trials as f64,
        max_false_positives: tally.max_false_positives,
        mean_defectives: tally.defectives as f64 / trials as f64,
        defective_histogram: tally.histogram,
        false_negatives: tally.false_negatives,
        equivalence_violations: tally.violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::is_covered;
    use crate::concat::concatenate;
    use crate::field::build_field;
    use crate::qary::rs_generate;
    use std::collections::HashMap;

    fn rs_4_2_3() -> TestMatrix {
        let f = build_field(4).unwrap();
        concatenate(&rs_generate(&f, 2, 3).unwrap()).unwrap()
    }

    #[test]
    fn model2_full_set() {
        let m = DefectiveModel::new(DefectKind::Model2, 5, 5).unwrap();
        let mut rng = trial_rng(1, 0);
        for _ in 0..50 {
            assert_eq!(draw_defectives(&m, &mut rng), vec![0, 1, 2, 3, 4]);
        }
        assert!(DefectiveModel::new(DefectKind::Model1, 5, 5).is_err());
        assert!(DefectiveModel::new(DefectKind::Model2, 5, 0).is_err());
    }

    #[test]
    fn model1_mean_size() {
        let (n, t, draws) = (200usize, 20usize, 100_000u64);
        let m = DefectiveModel::new(DefectKind::Model1, n, t).unwrap();
        let total: usize = (0..draws)
            .into_par_iter()
            .map(|i| draw_defectives(&m, &mut trial_rng(77, i)).len())
            .sum();
        let mean = total as f64 / draws as f64;
        let p = t as f64 / n as f64;
        let sigma = (n as f64 * p * (1.0 - p) / draws as f64).sqrt();
        assert!((mean - t as f64).abs() < 4.0 * sigma, "{mean}");
    }

    #[test]
    fn model2_uniform_chi_square() {
        let m = DefectiveModel::new(DefectKind::Model2, 16, 3).unwrap();
        let draws = 1_000_000u64;
        let counts = (0..draws)
            .into_par_iter()
            .fold(HashMap::new, |mut h: HashMap<Vec<usize>, u64>, i| {
                *h.entry(draw_defectives(&m, &mut trial_rng(5, i))).or_default() += 1;
                h
            })
            .reduce(HashMap::new, |mut a, b| {
                for (k, v) in b {
                    *a.entry(k).or_default() += v;
                }
                a
            });
        assert_eq!(counts.len(), 560);
        let expected = draws as f64 / 560.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of chi-square with 559 degrees of freedom
        // (Wilson-Hilferty)
        let df = 559.0f64;
        let z = 3.090_232;
        let crit = df * (1.0 - 2.0 / (9.0 * df) + z * (2.0 / (9.0 * df)).sqrt()).powi(3);
        assert!(chi2 < crit, "chi2 = {chi2}, critical = {crit}");
    }

    #[test]
    fn outcome_examples() {
        let id = TestMatrix::identity(4);
        assert_eq!(test_outcomes(&id, &[]), vec![0]);
        assert_eq!(test_outcomes(&id, &[2]), id.column(2).to_vec());
        assert_eq!(test_outcomes(&id, &[1, 2]), vec![0b0110]);
        assert_eq!(naive_decode(&id, &[0b0010]), vec![1]);
    }

    #[test]
    fn decoder_exact_on_all_small_sets_of_rs_matrix() {
        let m = rs_4_2_3();
        let mut sets = vec![vec![]];
        for a in 0..16 {
            sets.push(vec![a]);
            for b in a + 1..16 {
                sets.push(vec![a, b]);
            }
        }
        assert_eq!(sets.len(), 1 + 16 + 120);
        for s in sets {
            assert_eq!(naive_decode(&m, &test_outcomes(&m, &s)), s);
        }
    }

    #[test]
    fn decoder_superset_and_cover_equivalence() {
        let m = rs_4_2_3();
        for a in 0..16 {
            for b in a + 1..16 {
                for c in b + 1..16 {
                    let s = vec![a, b, c];
                    let decoded = naive_decode(&m, &test_outcomes(&m, &s));
                    assert!(s.iter().all(|x| decoded.contains(x)));
                    let covered = (0..16).any(|i| !s.contains(&i) && is_covered(&m, &s, i));
                    assert_eq!(decoded != s, covered);
                }
            }
        }
    }

    #[test]
    fn experiment_on_disjunct_matrix_never_fails() {
        let m = rs_4_2_3();
        let model = DefectiveModel::new(DefectKind::Model2, 16, 2).unwrap();
        let r = run_experiment(&m, &model, 5000, 11).unwrap();
        assert_eq!(r.failures, 0);
        assert_eq!(r.exact_recoveries, 5000);
        assert_eq!(r.defective_histogram, vec![0, 0, 5000]);
        assert_eq!((r.false_negatives, r.equivalence_violations), (0, 0));
    }

    #[test]
    fn experiment_with_twins_fails_sometimes() {
        let m = TestMatrix::from_rows(&["1100", "0010", "0001", "0000"]).unwrap();
        let model = DefectiveModel::new(DefectKind::Model2, 4, 1).unwrap();
        let r = run_experiment(&m, &model, 2000, 3).unwrap();
        assert!(r.failures > 0);
        assert_eq!(r.failures, r.total_false_positives);
        assert_eq!((r.false_negatives, r.equivalence_violations), (0, 0));
    }

    #[test]
    fn experiment_is_reproducible_and_model1_counts_empty_sets_exact() {
        let m = rs_4_2_3();
        let model = DefectiveModel::new(DefectKind::Model1, 16, 3).unwrap();
        let a = run_experiment(&m, &model, 3000, 99).unwrap();
        let b = run_experiment(&m, &model, 3000, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.defective_histogram[0] > 0);
        assert_eq!(a.defective_histogram.iter().sum::<u64>(), 3000);
        assert_eq!((a.false_negatives, a.equivalence_violations), (0, 0));
        assert!(a.failures > 0 && a.failures < 3000);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| run_experiment(&m, &model, 3000, 99).unwrap());
        assert_eq!(a, c);
    }
}
