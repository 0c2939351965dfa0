//! Exact kNN and mutual-kNN alignment between index-paired embedding spaces.
//!
//! For items shared by two spaces, the alignment of item `i` is
//! `|N_a(i) ∩ N_b(i)| / k`, where `N_x(i)` is the set of `i`'s k nearest
//! neighbours in space `x` (self excluded). Neighbour graphs are always built
//! over the full pooled item set; strata only partition the per-item scores.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::embedding_store::{EmbeddingSet, LayerStack};
use crate::error::{Error, Result};
use crate::simkit::{MetricKind, PairKernel};
use crate::strata::{Stratum, StratumLabels};

/// `k` nearest neighbours of every item, closest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborTable {
    k: usize,
    n: usize,
    neighbors: Vec<usize>,
    metric: MetricKind,
}

impl NeighborTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[usize]> {
        self.neighbors.chunks_exact(self.k)
    }
}

pub(crate) fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        Err(Error::InvalidK { k, n })
    } else {
        Ok(())
    }
}

/// Ordering key: ascending distance, or descending cosine similarity.
#[inline]
fn rank_key(kernel: &PairKernel<'_>, metric: MetricKind, i: usize, j: usize) -> f64 {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    match metric {
        MetricKind::Cosine => -kernel.raw(lo, hi),
        MetricKind::Euclidean => kernel.raw(lo, hi),
    }
}

#[inline]
fn by_key_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    // Keys are finite, so partial_cmp never fails; it also keeps -0.0 == 0.0.
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

/// Exact kNN over all rows, ties broken toward the lower index.
pub fn knn_table(set: &EmbeddingSet, k: usize, metric: MetricKind) -> Result<NeighborTable> {
    let n = set.len();
    check_k(k, n)?;
    let kernel = PairKernel::new(set, metric)?;
    let mut neighbors = vec![0usize; n * k];
    neighbors
        .par_chunks_mut(k)
        .enumerate()
        .for_each_init(
            || Vec::with_capacity(n - 1),
            |candidates, (i, out)| {
                candidates.clear();
                candidates.extend(
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| (rank_key(&kernel, metric, i, j), j)),
                );
                if k < candidates.len() {
                    candidates.select_nth_unstable_by(k - 1, by_key_then_index);
                }
                let top = &mut candidates[..k];
                top.sort_unstable_by(by_key_then_index);
                for (slot, &(_, j)) in out.iter_mut().zip(top.iter()) {
                    *slot = j;
                }
            },
        );
    Ok(NeighborTable {
        k,
        n,
        neighbors,
        metric,
    })
}

/// Per-item and aggregate mutual-kNN alignment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentResult {
    pub per_item: Vec<f64>,
    pub overall_mean: f64,
    pub per_stratum_mean: BTreeMap<Stratum, f64>,
    pub k: usize,
    pub metric_a: MetricKind,
    pub metric_b: MetricKind,
    pub ci: Option<(f64, f64)>,
    pub p_value: Option<f64>,
}

fn overlap(a: &[usize], b: &[usize], scratch: &mut Vec<usize>) -> usize {
    scratch.clear();
    scratch.extend_from_slice(b);
    scratch.sort_unstable();
    a.iter().filter(|x| scratch.binary_search(x).is_ok()).count()
}

/// Alignment between two precomputed neighbour tables of equal `k`.
pub fn alignment_from_tables(a: &NeighborTable, b: &NeighborTable) -> Result<AlignmentResult> {
    if a.len() != b.len() {
        return Err(Error::ItemMismatch {
            position: a.len().min(b.len()),
        });
    }
    if a.k != b.k {
        return Err(Error::InvalidParameter(format!(
            "neighbour tables disagree on k ({} vs {})",
            a.k, b.k
        )));
    }
    let k = a.k;
    let per_item: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(k),
            |scratch, i| overlap(a.row(i), b.row(i), scratch) as f64 / k as f64,
        )
        .collect();
    let overall_mean = per_item.iter().sum::<f64>() / per_item.len() as f64;
    Ok(AlignmentResult {
        per_item,
        overall_mean,
        per_stratum_mean: BTreeMap::new(),
        k,
        metric_a: a.metric,
        metric_b: b.metric,
        ci: None,
        p_value: None,
    })
}

pub fn mutual_knn_alignment(
    a: &EmbeddingSet,
    b: &EmbeddingSet,
    k: usize,
    metric_a: MetricKind,
    metric_b: MetricKind,
) -> Result<AlignmentResult> {
    if let Some(position) = a.first_item_mismatch(b) {
        return Err(Error::ItemMismatch { position });
    }
    let ta = knn_table(a, k, metric_a)?;
    let tb = knn_table(b, k, metric_b)?;
    alignment_from_tables(&ta, &tb)
}

/// Fills `per_stratum_mean` for every non-empty stratum.
pub fn stratified_alignment(result: &AlignmentResult, labels: &StratumLabels) -> Result<AlignmentResult> {
    if labels.len() != result.per_item.len() {
        return Err(Error::LengthMismatch {
            left: result.per_item.len(),
            right: labels.len(),
        });
    }
    let mut out = result.clone();
    out.per_stratum_mean = stratum_means(&result.per_item, labels);
    Ok(out)
}

pub(crate) fn stratum_means(values: &[f64], labels: &StratumLabels) -> BTreeMap<Stratum, f64> {
    Stratum::ALL
        .into_iter()
        .filter_map(|s| {
            let idx = labels.indices(s);
            (!idx.is_empty()).then(|| {
                let sum: f64 = idx.iter().map(|&i| values[i]).sum();
                (s, sum / idx.len() as f64)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerPoint {
    pub layer_name: String,
    pub depth_fraction: f64,
    pub overall: f64,
    pub per_stratum: BTreeMap<Stratum, f64>,
}

/// Alignment of each layer to a fixed reference, over normalized depth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCurve {
    pub points: Vec<LayerPoint>,
}

impl LayerCurve {
    /// Index of the point with the highest overall alignment (first on ties).
    pub fn argmax(&self) -> usize {
        self.points
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, p)| {
                if p.overall > best.1 {
                    (i, p.overall)
                } else {
                    best
                }
            })
            .0
    }
}

pub fn depth_fraction(position: usize, layers: usize) -> f64 {
    if layers <= 1 {
        0.0
    } else {
        position as f64 / (layers - 1) as f64
    }
}

pub fn layer_alignment_curve(
    stack: &LayerStack,
    reference: &EmbeddingSet,
    k: usize,
    metric_stack: MetricKind,
    metric_ref: MetricKind,
    labels: Option<&StratumLabels>,
) -> Result<LayerCurve> {
    if let Some(position) = reference.first_item_mismatch(&stack.layers()[0]) {
        return Err(Error::ItemMismatch { position });
    }
    if let Some(l) = labels {
        if l.len() != reference.len() {
            return Err(Error::LengthMismatch {
                left: reference.len(),
                right: l.len(),
            });
        }
    }
    let ref_table = knn_table(reference, k, metric_ref)?;
    let layers = stack.len();
    let mut points = Vec::with_capacity(layers);
    for (j, (layer, name)) in stack.layers().iter().zip(stack.names()).enumerate() {
        let table = knn_table(layer, k, metric_stack)?;
        let result = alignment_from_tables(&table, &ref_table)?;
        points.push(LayerPoint {
            layer_name: name.clone(),
            depth_fraction: depth_fraction(j, layers),
            overall: result.overall_mean,
            per_stratum: labels.map(|l| stratum_means(&result.per_item, l)).unwrap_or_default(),
        });
    }
    Ok(LayerCurve { points })
}
