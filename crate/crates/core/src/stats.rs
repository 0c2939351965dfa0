//! Seeded resampling statistics.
//!
//! All randomness comes from ChaCha8 keyed by the user seed. Each procedure
//! owns a domain, and each resample inside it draws from its own ChaCha
//! stream `(domain << 32) | resample_index`, so resamples can run in parallel
//! and still reproduce bit-for-bit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strata::{Stratum, StratumLabels};

/// Identifier of the generator and stream layout, echoed in every report.
pub const RNG_ALGORITHM: &str = "chacha8/rand_chacha-0.9/seed_from_u64+stream(domain<<32|index)";

pub const MIN_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

/// Independent stream families.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Domain {
    Bootstrap = 1,
    Permutation = 2,
    PairSubsample = 3,
    Synth = 4,
    TwoSampleBootstrap = 5,
}

impl RngSeed {
    pub fn rng(self, domain: Domain, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(((domain as u64) << 32) | (index & 0xFFFF_FFFF));
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// `mean(a) - mean(b) > 0`
    #[default]
    Greater,
    Less,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestReport {
    pub observed: f64,
    pub ci: (f64, f64),
    pub ci_level: f64,
    pub p_value: f64,
    pub alternative: Alternative,
    pub n_resamples: usize,
    pub seed: RngSeed,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "confidence level must lie in (0, 1), got {level}"
        )))
    }
}

fn check_resamples(n_resamples: usize) -> Result<()> {
    if n_resamples >= MIN_RESAMPLES {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "need at least {MIN_RESAMPLES} resamples, got {n_resamples}"
        )))
    }
}

fn percentile_interval(mut stats: Vec<f64>, level: f64) -> (f64, f64) {
    stats.sort_unstable_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (
        quantile_sorted(&stats, tail),
        quantile_sorted(&stats, 1.0 - tail),
    )
}

fn resampled_mean(values: &[f64], rng: &mut ChaCha8Rng) -> f64 {
    let n = values.len();
    let sum: f64 = (0..n).map(|_| values[rng.random_range(0..n)]).sum();
    sum / n as f64
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_ci(values: &[f64], n_resamples: usize, seed: RngSeed, level: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("bootstrap needs at least one value".into()));
    }
    check_level(level)?;
    check_resamples(n_resamples)?;
    let means: Vec<f64> = (0..n_resamples)
        .into_par_iter()
        .map(|r| resampled_mean(values, &mut seed.rng(Domain::Bootstrap, r as u64)))
        .collect();
    Ok(percentile_interval(means, level))
}

/// Percentile bootstrap interval for `mean(a) - mean(b)`, resampling each
/// group independently.
pub fn bootstrap_diff_ci(
    a: &[f64],
    b: &[f64],
    n_resamples: usize,
    seed: RngSeed,
    level: f64,
) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("bootstrap needs non-empty groups".into()));
    }
    check_level(level)?;
    check_resamples(n_resamples)?;
    let diffs: Vec<f64> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed.rng(Domain::TwoSampleBootstrap, r as u64);
            let ma = resampled_mean(a, &mut rng);
            let mb = resampled_mean(b, &mut rng);
            ma - mb
        })
        .collect();
    Ok(percentile_interval(diffs, level))
}

/// Label-permutation test of `mean(values | a) - mean(values | b)`.
#[derive(Debug, Clone, Copy)]
pub struct PermutationTest {
    pub n_resamples: usize,
    pub seed: RngSeed,
    pub alternative: Alternative,
    pub ci_level: f64,
}

impl PermutationTest {
    pub fn new(n_resamples: usize, seed: RngSeed) -> Self {
        Self {
            n_resamples,
            seed,
            alternative: Alternative::Greater,
            ci_level: 0.95,
        }
    }

    pub fn with_alternative(mut self, alternative: Alternative) -> Self {
        self.alternative = alternative;
        self
    }

    pub fn with_ci_level(mut self, level: f64) -> Self {
        self.ci_level = level;
        self
    }

    pub fn run(
        &self,
        values: &[f64],
        labels: &StratumLabels,
        group_a: Stratum,
        group_b: Stratum,
    ) -> Result<TestReport> {
        if values.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: labels.len(),
            });
        }
        if group_a == group_b {
            return Err(Error::InvalidParameter("groups must differ".into()));
        }
        check_level(self.ci_level)?;
        check_resamples(self.n_resamples)?;
        let a: Vec<f64> = labels.indices(group_a).into_iter().map(|i| values[i]).collect();
        let b: Vec<f64> = labels.indices(group_b).into_iter().map(|i| values[i]).collect();
        for (stratum, group) in [(group_a, &a), (group_b, &b)] {
            if group.is_empty() {
                return Err(Error::UndersizedStratum {
                    stratum,
                    size: 0,
                    required: 1,
                });
            }
        }
        let observed = mean(&a) - mean(&b);
        let n_a = a.len();
        let pooled: Vec<f64> = a.iter().chain(&b).copied().collect();

        // Rounding from a different summation order must not break exact ties.
        let slack = 1e-12 * observed.abs().max(1.0);
        let alternative = self.alternative;
        let extreme = move |permuted: f64| match alternative {
            Alternative::Greater => permuted >= observed - slack,
            Alternative::Less => permuted <= observed + slack,
            Alternative::TwoSided => permuted.abs() >= observed.abs() - slack,
        };
        let hits: usize = (0..self.n_resamples)
            .into_par_iter()
            .map_init(
                || pooled.clone(),
                |buf, r| {
                    let mut rng = self.seed.rng(Domain::Permutation, r as u64);
                    buf.copy_from_slice(&pooled);
                    buf.shuffle(&mut rng);
                    let (pa, pb) = buf.split_at(n_a);
                    usize::from(extreme(mean(pa) - mean(pb)))
                },
            )
            .sum();
        let p_value = (1 + hits) as f64 / (1 + self.n_resamples) as f64;
        let ci = bootstrap_diff_ci(&a, &b, self.n_resamples, self.seed, self.ci_level)?;
        Ok(TestReport {
            observed,
            ci,
            ci_level: self.ci_level,
            p_value,
            alternative: self.alternative,
            n_resamples: self.n_resamples,
            seed: self.seed,
        })
    }
}

/// One-sided (greater) permutation test with a 95% bootstrap interval.
pub fn permutation_test_diff(
    values: &[f64],
    labels: &StratumLabels,
    group_a: Stratum,
    group_b: Stratum,
    n_resamples: usize,
    seed: RngSeed,
) -> Result<TestReport> {
    PermutationTest::new(n_resamples, seed).run(values, labels, group_a, group_b)
}

/// Expected mutual-kNN alignment between spaces with independent
/// neighbourhood structure.
pub fn expected_null_alignment(n: usize, k: usize) -> Result<f64> {
    if k == 0 || n < 2 || k > n - 1 {
        return Err(Error::InvalidK { k, n });
    }
    Ok(k as f64 / (n - 1) as f64)
}

/// Kolmogorov-Smirnov distance between a sample and Uniform(0, 1).
pub fn ks_uniform_distance(sample: &[f64]) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            (((i + 1) as f64 / n) - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}
