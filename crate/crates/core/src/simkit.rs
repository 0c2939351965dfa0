//! Similarity kernels and within-stratum self-similarity.
//!
//! Euclidean distances are negated when averaged ("similarity orientation"),
//! so a larger value always means "more similar" under either metric.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding_store::EmbeddingSet;
use crate::error::{Error, Result};
use crate::stats::{Domain, RngSeed};
use crate::strata::{Stratum, StratumLabels};

/// Default pair budget before within-stratum means switch to sampling.
pub const DEFAULT_MAX_PAIRS: u64 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Cosine,
    Euclidean,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Cosine => "cosine",
            MetricKind::Euclidean => "euclidean",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(MetricKind::Cosine),
            "euclidean" => Ok(MetricKind::Euclidean),
            _ => Err(Error::InvalidParameter(format!("unknown metric {s:?}"))),
        }
    }
}

fn check_dims(u: usize, v: usize) -> Result<()> {
    if u == v {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left: u, right: v })
    }
}

#[inline]
pub(crate) fn dot<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| a.into() * b.into()).sum()
}

#[inline]
pub(crate) fn norm<T: Copy + Into<f64>>(u: &[T]) -> f64 {
    dot(u, u).sqrt()
}

#[inline]
pub(crate) fn cosine_from_parts(dot: f64, norm_u: f64, norm_v: f64) -> f64 {
    (dot / (norm_u * norm_v)).clamp(-1.0, 1.0)
}

#[inline]
pub(crate) fn squared_distance<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(&a, &b)| {
            let diff = a.into() - b.into();
            diff * diff
        })
        .sum()
}

pub fn cosine_similarity<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64> {
    check_dims(u.len(), v.len())?;
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 {
        return Err(Error::ZeroNorm { row: 0 });
    }
    if nv == 0.0 {
        return Err(Error::ZeroNorm { row: 1 });
    }
    Ok(cosine_from_parts(dot(u, v), nu, nv))
}

pub fn euclidean_distance<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64> {
    check_dims(u.len(), v.len())?;
    Ok(squared_distance(u, v).sqrt())
}

/// Row norms of `set`, failing on the first zero row.
pub(crate) fn checked_norms(set: &EmbeddingSet) -> Result<Vec<f64>> {
    let norms: Vec<f64> = set.rows().map(norm).collect();
    match norms.iter().position(|&n| n == 0.0) {
        Some(row) => Err(Error::ZeroNorm { row }),
        None => Ok(norms),
    }
}

/// Row-pair kernel with cached norms, bit-identical to the scalar functions.
pub(crate) struct PairKernel<'a> {
    set: &'a EmbeddingSet,
    metric: MetricKind,
    norms: Vec<f64>,
}

impl<'a> PairKernel<'a> {
    pub(crate) fn new(set: &'a EmbeddingSet, metric: MetricKind) -> Result<Self> {
        let norms = match metric {
            MetricKind::Cosine => checked_norms(set)?,
            MetricKind::Euclidean => Vec::new(),
        };
        Ok(Self { set, metric, norms })
    }

    /// Cosine similarity or euclidean distance between rows `i` and `j`.
    #[inline]
    pub(crate) fn raw(&self, i: usize, j: usize) -> f64 {
        let (u, v) = (self.set.row(i), self.set.row(j));
        match self.metric {
            MetricKind::Cosine => cosine_from_parts(dot(u, v), self.norms[i], self.norms[j]),
            MetricKind::Euclidean => squared_distance(u, v).sqrt(),
        }
    }

    /// Larger-is-more-similar value.
    #[inline]
    pub(crate) fn similarity(&self, i: usize, j: usize) -> f64 {
        match self.metric {
            MetricKind::Cosine => self.raw(i, j),
            MetricKind::Euclidean => -self.raw(i, j),
        }
    }
}

/// Dense symmetric `n x n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMatrix {
    n: usize,
    values: Vec<f64>,
}

impl PairwiseMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// All pairwise cosine similarities or euclidean distances, with an exact
/// diagonal (1 or 0).
pub fn pairwise_matrix(set: &EmbeddingSet, metric: MetricKind) -> Result<PairwiseMatrix> {
    let kernel = PairKernel::new(set, metric)?;
    let n = set.len();
    let diagonal = match metric {
        MetricKind::Cosine => 1.0,
        MetricKind::Euclidean => 0.0,
    };
    let mut values = vec![0.0; n * n];
    values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, out) in row.iter_mut().enumerate() {
            *out = match i.cmp(&j) {
                std::cmp::Ordering::Equal => diagonal,
                // Always evaluate with the smaller index first so M is exactly symmetric.
                std::cmp::Ordering::Less => kernel.raw(i, j),
                std::cmp::Ordering::Greater => kernel.raw(j, i),
            };
        }
    });
    Ok(PairwiseMatrix { n, values })
}

/// Pair sampling for large strata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Subsample {
    pub max_pairs: u64,
    pub seed: RngSeed,
}

/// Similarities of the pairs that entered a within-stratum mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    /// In ascending pair order.
    pub values: Vec<f64>,
    pub total_pairs: u64,
    pub sampled: bool,
}

impl PairSample {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn sorted_unique(indices: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut idx = indices.to_vec();
    idx.sort_unstable();
    if let Some(w) = idx.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameter(format!("index {} listed twice", w[0])));
    }
    if let Some(&last) = idx.last() {
        if last >= n {
            return Err(Error::InvalidParameter(format!(
                "index {last} out of range for {n} items"
            )));
        }
    }
    Ok(idx)
}

/// Similarities of unordered pairs within `indices`, exhaustive or sampled
/// uniformly without replacement when the pair count exceeds the budget.
pub fn within_pair_similarities(
    set: &EmbeddingSet,
    indices: &[usize],
    metric: MetricKind,
    subsample: Option<Subsample>,
    stream: u64,
) -> Result<PairSample> {
    if indices.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 items for a within-set mean, got {}",
            indices.len()
        )));
    }
    let idx = sorted_unique(indices, set.len())?;
    let kernel = PairKernel::new(set, metric)?;
    let m = idx.len() as u64;
    let total_pairs = m * (m - 1) / 2;

    match subsample {
        Some(sub) if total_pairs > sub.max_pairs => {
            if sub.max_pairs == 0 {
                return Err(Error::InvalidParameter("max_pairs must be positive".into()));
            }
            let mut rng = sub.seed.rng(Domain::PairSubsample, stream);
            let mut ordinals: Vec<u64> = if total_pairs <= u32::MAX as u64 {
                index::sample(&mut rng, total_pairs as usize, sub.max_pairs as usize)
                    .into_iter()
                    .map(|o| o as u64)
                    .collect()
            } else {
                sample_u64_distinct(&mut rng, total_pairs, sub.max_pairs)
            };
            ordinals.sort_unstable();
            let pairs = ordinals_to_pairs(&ordinals, m);
            let values = pairs
                .par_iter()
                .map(|&(a, b)| kernel.similarity(idx[a as usize], idx[b as usize]))
                .collect();
            Ok(PairSample {
                values,
                total_pairs,
                sampled: true,
            })
        }
        _ => {
            let rows: Vec<Vec<f64>> = (0..idx.len())
                .into_par_iter()
                .map(|a| {
                    idx[a + 1..]
                        .iter()
                        .map(|&j| kernel.similarity(idx[a], j))
                        .collect()
                })
                .collect();
            Ok(PairSample {
                values: rows.concat(),
                total_pairs,
                sampled: false,
            })
        }
    }
}

/// Floyd's algorithm for `amount` distinct values in `0..length`.
fn sample_u64_distinct(rng: &mut impl rand::Rng, length: u64, amount: u64) -> Vec<u64> {
    let mut chosen = std::collections::HashSet::with_capacity(amount as usize);
    let mut out = Vec::with_capacity(amount as usize);
    for j in (length - amount)..length {
        let t = rng.random_range(0..=j);
        let pick = if chosen.contains(&t) { j } else { t };
        chosen.insert(pick);
        out.push(pick);
    }
    out
}

/// Maps sorted pair ordinals (row-major over `a < b`) to `(a, b)` positions.
fn ordinals_to_pairs(sorted: &[u64], m: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::with_capacity(sorted.len());
    let mut a = 0u64;
    let mut row_start = 0u64;
    for &o in sorted {
        while o >= row_start + (m - 1 - a) {
            row_start += m - 1 - a;
            a += 1;
        }
        out.push((a, a + 1 + (o - row_start)));
    }
    out
}

/// Mean similarity over unordered pairs within `indices` and the number of
/// pairs it averages.
pub fn mean_within_similarity(
    set: &EmbeddingSet,
    indices: &[usize],
    metric: MetricKind,
    subsample: Option<Subsample>,
) -> Result<(f64, u64)> {
    let sample = within_pair_similarities(set, indices, metric, subsample, 0)?;
    Ok((sample.mean(), sample.values.len() as u64))
}

/// Within-stratum self-similarity of Aesthetic minus Unaesthetic items.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilaritySummary {
    pub mean_aesthetic: f64,
    pub mean_unaesthetic: f64,
    pub delta: f64,
    pub metric: MetricKind,
    pub pair_counts: (u64, u64),
    pub subsample_seed: Option<RngSeed>,
}

/// Pair samples behind a [`SimilaritySummary`], for interval estimates.
#[derive(Debug, Clone)]
pub struct StratumPairs {
    pub aesthetic: PairSample,
    pub unaesthetic: PairSample,
}

pub fn stratum_delta(
    set: &EmbeddingSet,
    labels: &StratumLabels,
    metric: MetricKind,
    subsample: Option<Subsample>,
) -> Result<SimilaritySummary> {
    stratum_delta_with_pairs(set, labels, metric, subsample).map(|(s, _)| s)
}

pub fn stratum_delta_with_pairs(
    set: &EmbeddingSet,
    labels: &StratumLabels,
    metric: MetricKind,
    subsample: Option<Subsample>,
) -> Result<(SimilaritySummary, StratumPairs)> {
    if labels.len() != set.len() {
        return Err(Error::LengthMismatch {
            left: set.len(),
            right: labels.len(),
        });
    }
    let aesthetic = labels.indices(Stratum::Aesthetic);
    let unaesthetic = labels.indices(Stratum::Unaesthetic);
    for (stratum, members) in [(Stratum::Aesthetic, &aesthetic), (Stratum::Unaesthetic, &unaesthetic)] {
        if members.len() < 2 {
            return Err(Error::UndersizedStratum {
                stratum,
                size: members.len(),
                required: 2,
            });
        }
    }
    let pa = within_pair_similarities(set, &aesthetic, metric, subsample, 0)?;
    let pu = within_pair_similarities(set, &unaesthetic, metric, subsample, 1)?;
    let (mean_aesthetic, mean_unaesthetic) = (pa.mean(), pu.mean());
    let summary = SimilaritySummary {
        mean_aesthetic,
        mean_unaesthetic,
        delta: mean_aesthetic - mean_unaesthetic,
        metric,
        pair_counts: (pa.values.len() as u64, pu.values.len() as u64),
        subsample_seed: subsample.filter(|_| pa.sampled || pu.sampled).map(|s| s.seed),
    };
    Ok((
        summary,
        StratumPairs {
            aesthetic: pa,
            unaesthetic: pu,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strata::Thresholds;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set_from(rows: &[Vec<f64>]) -> EmbeddingSet {
        EmbeddingSet::from_rows(EmbeddingSet::synthetic_ids(rows.len()), rows, "t").unwrap()
    }

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&[2.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(
            cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-6
        );
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm { .. })
        ));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn euclidean_examples() {
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean_distance(&[0.3f32, -2.0], &[0.3, -2.0]).unwrap(), 0.0);
        assert!(euclidean_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn matrix_examples() {
        let set = set_from(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let cos = pairwise_matrix(&set, MetricKind::Cosine).unwrap();
        assert_eq!(cos.row(0), &[1.0, 0.0]);
        assert_eq!(cos.row(1), &[0.0, 1.0]);
        let euc = pairwise_matrix(&set, MetricKind::Euclidean).unwrap();
        assert_eq!(euc.get(0, 0), 0.0);
        assert_abs_diff_eq!(euc.get(0, 1), 2f64.sqrt(), epsilon = 1e-12);
        assert_eq!(euc.get(0, 1), euc.get(1, 0));
    }

    #[test]
    fn matrix_reports_zero_row() {
        let set = set_from(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(
            pairwise_matrix(&set, MetricKind::Cosine),
            Err(Error::ZeroNorm { row: 1 })
        ));
        assert!(pairwise_matrix(&set, MetricKind::Euclidean).is_ok());
    }

    /// Every entry against the scalar functions applied one pair at a time.
    #[test]
    fn matrix_matches_scalar_oracle() {
        for seed in 0..5 {
            let rows = random_rows(8, 4, seed);
            let set = set_from(&rows);
            let cos = pairwise_matrix(&set, MetricKind::Cosine).unwrap();
            let euc = pairwise_matrix(&set, MetricKind::Euclidean).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    let (u, v) = (set.row(i), set.row(j));
                    assert_abs_diff_eq!(cos.get(i, j), cosine_similarity(u, v).unwrap(), epsilon = 1e-12);
                    assert_abs_diff_eq!(euc.get(i, j), euclidean_distance(u, v).unwrap(), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn within_examples() {
        let same = set_from(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
        let (mean, count) = mean_within_similarity(&same, &[0, 1], MetricKind::Cosine, None).unwrap();
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);
        assert_eq!(count, 1);

        let ortho = set_from(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(
            mean_within_similarity(&ortho, &[0, 1, 2], MetricKind::Cosine, None).unwrap(),
            (0.0, 3)
        );
        assert!(mean_within_similarity(&ortho, &[1], MetricKind::Cosine, None).is_err());
        assert!(mean_within_similarity(&ortho, &[1, 1], MetricKind::Cosine, None).is_err());
    }

    /// Exhaustive loop over all 15 pairs of 6 vectors.
    #[test]
    fn within_matches_brute_force_pairs() {
        let rows = random_rows(6, 5, 77);
        let set = set_from(&rows);
        for metric in [MetricKind::Cosine, MetricKind::Euclidean] {
            let mut sum = 0.0;
            let mut count = 0;
            for i in 0..6 {
                for j in (i + 1)..6 {
                    let (u, v) = (set.row(i), set.row(j));
                    sum += match metric {
                        MetricKind::Cosine => cosine_similarity(u, v).unwrap(),
                        MetricKind::Euclidean => -euclidean_distance(u, v).unwrap(),
                    };
                    count += 1;
                }
            }
            let (mean, pairs) = mean_within_similarity(&set, &[0, 1, 2, 3, 4, 5], metric, None).unwrap();
            assert_eq!(pairs, 15);
            assert_eq!(count, 15);
            assert_abs_diff_eq!(mean, sum / 15.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ordinal_mapping_covers_all_pairs() {
        let m = 7u64;
        let all: Vec<u64> = (0..m * (m - 1) / 2).collect();
        let pairs = ordinals_to_pairs(&all, m);
        let mut expected = Vec::new();
        for a in 0..m {
            for b in (a + 1)..m {
                expected.push((a, b));
            }
        }
        assert_eq!(pairs, expected);
    }

    #[test]
    fn subsampling_is_seeded_and_bounded() {
        let set = set_from(&random_rows(40, 3, 1));
        let idx: Vec<usize> = (0..40).collect();
        let sub = Subsample {
            max_pairs: 100,
            seed: RngSeed(5),
        };
        let a = within_pair_similarities(&set, &idx, MetricKind::Euclidean, Some(sub), 0).unwrap();
        let b = within_pair_similarities(&set, &idx, MetricKind::Euclidean, Some(sub), 0).unwrap();
        assert!(a.sampled);
        assert_eq!(a.values.len(), 100);
        assert_eq!(a.total_pairs, 780);
        assert_eq!(a, b);
        let full = within_pair_similarities(&set, &idx, MetricKind::Euclidean, None, 0).unwrap();
        assert_abs_diff_eq!(a.mean(), full.mean(), epsilon = 0.1 * full.mean().abs());

        let roomy = Subsample {
            max_pairs: 780,
            seed: RngSeed(5),
        };
        let c = within_pair_similarities(&set, &idx, MetricKind::Euclidean, Some(roomy), 0).unwrap();
        assert!(!c.sampled);
        assert_eq!(c, full);
    }

    #[test]
    fn floyd_sampler_is_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = sample_u64_distinct(&mut rng, 1 << 40, 1000);
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 1000);
        assert!(s.iter().all(|&x| x < 1 << 40));
    }

    #[test]
    fn delta_examples() {
        use Stratum::*;
        let set = set_from(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
        let labels = StratumLabels::from_labels(vec![Aesthetic, Aesthetic, Unaesthetic, Unaesthetic], Thresholds::default());
        let s = stratum_delta(&set, &labels, MetricKind::Cosine, None).unwrap();
        assert_eq!(s.delta, 1.0);
        assert_eq!(s.pair_counts, (1, 1));
        assert_eq!(s.subsample_seed, None);

        let small = StratumLabels::from_labels(vec![Aesthetic, Ambiguous, Unaesthetic, Unaesthetic], Thresholds::default());
        assert!(matches!(
            stratum_delta(&set, &small, MetricKind::Cosine, None),
            Err(Error::UndersizedStratum { stratum: Aesthetic, size: 1, .. })
        ));
    }

    #[test]
    fn euclidean_means_are_non_positive() {
        let set = set_from(&random_rows(10, 3, 4));
        let (mean, _) = mean_within_similarity(&set, &(0..10).collect::<Vec<_>>(), MetricKind::Euclidean, None).unwrap();
        assert!(mean <= 0.0);
    }

    #[test]
    fn metric_parsing() {
        assert_eq!("cosine".parse::<MetricKind>().unwrap(), MetricKind::Cosine);
        assert_eq!("euclidean".parse::<MetricKind>().unwrap(), MetricKind::Euclidean);
        assert!("manhattan".parse::<MetricKind>().is_err());
    }

    #[test]
    fn identical_strata_delta_near_zero() {
        use crate::synth::{generate, StratumNoise, SynthKind, SynthSpec};
        let same = StratumNoise {
            aesthetic: 0.5,
            ambiguous: 0.5,
            unaesthetic: 0.5,
        };
        for seed in 0..50 {
            let spec = SynthSpec::new(SynthKind::PlantedStrata, 600, 32, seed).with_strata_noise(same);
            let out = generate(&spec).unwrap();
            let crate::synth::SynthOutput::Pair { a, metas, .. } = out else {
                panic!("expected a pair")
            };
            let labels = crate::strata::bucketize(&metas, 4.5, 5.5).unwrap();
            let delta = stratum_delta(&a, &labels, MetricKind::Cosine, None).unwrap().delta;
            assert!(delta.abs() < 0.02, "seed {seed}: {delta}");
        }
    }

    proptest! {
        #[test]
        fn cosine_invariant_to_positive_rescaling(seed in any::<u64>(), scales in prop::collection::vec(0.01f64..100.0, 6)) {
            let rows = random_rows(6, 4, seed);
            let scaled: Vec<Vec<f64>> = rows.iter().zip(&scales).map(|(r, s)| r.iter().map(|v| v * s).collect()).collect();
            let a = pairwise_matrix(&set_from(&rows), MetricKind::Cosine).unwrap();
            let b = pairwise_matrix(&set_from(&scaled), MetricKind::Cosine).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    prop_assert!((a.get(i, j) - b.get(i, j)).abs() <= 1e-6);
                }
            }
        }

        #[test]
        fn matrix_symmetric_with_exact_diagonal(seed in any::<u64>(), n in 1usize..10) {
            let set = set_from(&random_rows(n, 3, seed));
            for (metric, diag) in [(MetricKind::Cosine, 1.0), (MetricKind::Euclidean, 0.0)] {
                let m = pairwise_matrix(&set, metric).unwrap();
                for i in 0..n {
                    prop_assert_eq!(m.get(i, i), diag);
                    for j in 0..n {
                        prop_assert!((m.get(i, j) - m.get(j, i)).abs() <= 1e-6);
                    }
                }
            }
        }

        #[test]
        fn within_mean_permutation_invariant(seed in any::<u64>(), perm_seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let set = set_from(&random_rows(12, 3, seed));
            let idx: Vec<usize> = vec![0, 2, 3, 5, 7, 8, 11];
            let mut shuffled = idx.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            for metric in [MetricKind::Cosine, MetricKind::Euclidean] {
                let a = mean_within_similarity(&set, &idx, metric, None).unwrap();
                let b = mean_within_similarity(&set, &shuffled, metric, None).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
