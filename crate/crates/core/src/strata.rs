//! Score thresholds to Aesthetic / Ambiguous / Unaesthetic buckets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding_store::ItemMeta;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Aesthetic,
    Ambiguous,
    Unaesthetic,
    Unscored,
}

impl Stratum {
    pub const ALL: [Stratum; 4] = [
        Stratum::Aesthetic,
        Stratum::Ambiguous,
        Stratum::Unaesthetic,
        Stratum::Unscored,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::Aesthetic => "aesthetic",
            Stratum::Ambiguous => "ambiguous",
            Stratum::Unaesthetic => "unaesthetic",
            Stratum::Unscored => "unscored",
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stratum {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stratum::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown stratum {s:?}")))
    }
}

/// Closed ambiguity band `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub lo: f64,
    pub hi: f64,
}

impl Thresholds {
    /// Half-width of the default band around the scale midpoint 5.
    pub const DEFAULT_MARGIN: f64 = 0.5;

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::InvalidParameter(format!(
                "thresholds need finite lo <= hi, got lo = {lo}, hi = {hi}"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn classify(&self, score: Option<f64>) -> Stratum {
        match score {
            None => Stratum::Unscored,
            Some(s) if s > self.hi => Stratum::Aesthetic,
            Some(s) if s < self.lo => Stratum::Unaesthetic,
            Some(_) => Stratum::Ambiguous,
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            lo: 5.0 - Self::DEFAULT_MARGIN,
            hi: 5.0 + Self::DEFAULT_MARGIN,
        }
    }
}

/// One stratum label per item, plus the thresholds that produced them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumLabels {
    labels: Vec<Stratum>,
    thresholds: Thresholds,
}

impl StratumLabels {
    pub fn from_labels(labels: Vec<Stratum>, thresholds: Thresholds) -> Self {
        Self { labels, thresholds }
    }

    /// Every item `Unscored`.
    pub fn unscored(n: usize) -> Self {
        Self::from_labels(vec![Stratum::Unscored; n], Thresholds::default())
    }

    pub fn labels(&self) -> &[Stratum] {
        &self.labels
    }

    pub fn thresholds(&self) -> Thresholds {
        self.thresholds
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, which: Stratum) -> usize {
        self.labels.iter().filter(|&&l| l == which).count()
    }

    /// Ascending indices of items in `which`.
    pub fn indices(&self, which: Stratum) -> Vec<usize> {
        stratum_indices(self, which)
    }
}

pub fn bucketize(metas: &[ItemMeta], lo: f64, hi: f64) -> Result<StratumLabels> {
    let thresholds = Thresholds::new(lo, hi)?;
    let labels = metas.iter().map(|m| thresholds.classify(m.score)).collect();
    Ok(StratumLabels { labels, thresholds })
}

pub fn stratum_indices(labels: &StratumLabels, which: Stratum) -> Vec<usize> {
    labels
        .labels
        .iter()
        .enumerate()
        .filter_map(|(i, &l)| (l == which).then_some(i))
        .collect()
}
