//! Seeded synthetic fixtures with controllable cross-space neighbourhood
//! overlap.
//!
//! All latent-based kinds draw a shared latent `z_i = c * u + g_i` (`u` a
//! random unit direction, `c` the `center_norm`, `g_i` standard Gaussian)
//! and add independent Gaussian noise scaled by a per-item level to obtain
//! each observed space.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding_store::{save_container_with_meta, EmbeddingSet, ItemId, ItemMeta, LayerStack};
use crate::error::{Error, Result};
use crate::stats::{Domain, RngSeed};
use crate::strata::Stratum;

/// Scores attached to planted strata; the default thresholds (4.5, 5.5)
/// recover the intended buckets.
pub const AESTHETIC_SCORE: f64 = 7.0;
pub const AMBIGUOUS_SCORE: f64 = 5.0;
pub const UNAESTHETIC_SCORE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// `b = a Q` for a random orthogonal `Q`.
    Rotation,
    /// Shared latent plus independent noise in each space.
    NoisePair,
    /// Two unrelated Gaussian clouds.
    Independent,
    /// Noise pair with the noise level set by each item's stratum.
    PlantedStrata,
    /// Layer `j` is the latent plus noise at `schedule[j]`; reference is the latent.
    LayerSweep,
}

impl SynthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::Rotation => "rotation",
            SynthKind::NoisePair => "noise-pair",
            SynthKind::Independent => "independent",
            SynthKind::PlantedStrata => "planted-strata",
            SynthKind::LayerSweep => "layer-sweep",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SynthKind::Rotation,
            SynthKind::NoisePair,
            SynthKind::Independent,
            SynthKind::PlantedStrata,
            SynthKind::LayerSweep,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::InvalidSpec(format!("unknown fixture kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumNoise {
    pub aesthetic: f64,
    pub ambiguous: f64,
    pub unaesthetic: f64,
}

impl Default for StratumNoise {
    fn default() -> Self {
        Self {
            aesthetic: 0.1,
            ambiguous: 0.5,
            unaesthetic: 0.9,
        }
    }
}

impl StratumNoise {
    pub fn level(&self, stratum: Stratum) -> f64 {
        match stratum {
            Stratum::Aesthetic => self.aesthetic,
            Stratum::Ambiguous => self.ambiguous,
            Stratum::Unaesthetic | Stratum::Unscored => self.unaesthetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub d: usize,
    /// Noise level for `NoisePair`.
    pub noise: f64,
    pub strata_noise: StratumNoise,
    /// Norm of the shared latent offset.
    pub center_norm: f64,
    /// Per-layer noise levels for `LayerSweep`.
    pub layer_schedule: Vec<f64>,
    pub seed: RngSeed,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, n: usize, d: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            d,
            noise: 0.5,
            strata_noise: StratumNoise::default(),
            center_norm: 0.0,
            layer_schedule: vec![1.5, 1.0, 0.3, 1.0, 1.5],
            seed: RngSeed(seed),
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_strata_noise(mut self, strata_noise: StratumNoise) -> Self {
        self.strata_noise = strata_noise;
        self
    }

    pub fn with_center_norm(mut self, center_norm: f64) -> Self {
        self.center_norm = center_norm;
        self
    }

    pub fn with_layer_schedule(mut self, schedule: Vec<f64>) -> Self {
        self.layer_schedule = schedule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::InvalidSpec(format!("n must be at least 4, got {}", self.n)));
        }
        if self.d < 2 {
            return Err(Error::InvalidSpec(format!("d must be at least 2, got {}", self.d)));
        }
        let level_ok = |x: f64| x.is_finite() && x >= 0.0;
        let levels = [
            ("noise", self.noise),
            ("aesthetic noise", self.strata_noise.aesthetic),
            ("ambiguous noise", self.strata_noise.ambiguous),
            ("unaesthetic noise", self.strata_noise.unaesthetic),
            ("center norm", self.center_norm),
        ];
        if let Some((name, v)) = levels.iter().find(|(_, v)| !level_ok(*v)) {
            return Err(Error::InvalidSpec(format!("{name} must be finite and >= 0, got {v}")));
        }
        if self.kind == SynthKind::LayerSweep {
            if self.layer_schedule.is_empty() {
                return Err(Error::InvalidSpec("layer schedule is empty".into()));
            }
            if let Some(v) = self.layer_schedule.iter().find(|v| !level_ok(**v)) {
                return Err(Error::InvalidSpec(format!(
                    "layer noise levels must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum SynthOutput {
    Pair {
        a: EmbeddingSet,
        b: EmbeddingSet,
        metas: Vec<ItemMeta>,
    },
    Stack {
        stack: LayerStack,
        reference: EmbeddingSet,
        metas: Vec<ItemMeta>,
    },
}

impl SynthOutput {
    pub fn metas(&self) -> &[ItemMeta] {
        match self {
            SynthOutput::Pair { metas, .. } | SynthOutput::Stack { metas, .. } => metas,
        }
    }
}

type Matrix = Vec<Vec<f64>>;

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

fn latent(rng: &mut ChaCha8Rng, n: usize, d: usize, center_norm: f64) -> Matrix {
    let mut direction: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let len = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v *= center_norm / len);
    let mut z = gaussian_matrix(rng, n, d);
    for row in &mut z {
        row.iter_mut().zip(&direction).for_each(|(v, c)| *v += c);
    }
    z
}

fn add_noise(rng: &mut ChaCha8Rng, base: &Matrix, levels: &[f64]) -> Matrix {
    base.iter()
        .zip(levels)
        .map(|(row, &lambda)| {
            row.iter()
                .map(|&v| v + lambda * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Random `d x d` orthogonal matrix (row-major rows) from Gram-Schmidt on a
/// Gaussian matrix, orthonormalized twice for stability.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Result<Matrix> {
    // Columns are built as rows of `basis`, then transposed.
    let mut basis = gaussian_matrix(rng, d, d);
    for _ in 0..2 {
        for i in 0..d {
            for j in 0..i {
                let proj: f64 = basis[i].iter().zip(&basis[j]).map(|(a, b)| a * b).sum();
                let (head, tail) = basis.split_at_mut(i);
                tail[0].iter_mut().zip(&head[j]).for_each(|(a, b)| *a -= proj * b);
            }
            let len = basis[i].iter().map(|v| v * v).sum::<f64>().sqrt();
            basis[i].iter_mut().for_each(|v| *v /= len);
        }
    }
    let q: Matrix = (0..d).map(|r| (0..d).map(|c| basis[c][r]).collect()).collect();
    let worst = orthogonality_error(&q);
    if worst > 1e-6 {
        return Err(Error::InvalidSpec(format!(
            "orthonormalization failed (max |QᵀQ - I| = {worst:e})"
        )));
    }
    Ok(q)
}

/// `max |QᵀQ - I|` entrywise.
pub fn orthogonality_error(q: &Matrix) -> f64 {
    let d = q.len();
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            let g: f64 = (0..d).map(|r| q[r][a] * q[r][b]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

fn rotate(a: &Matrix, q: &Matrix) -> Matrix {
    let d = q.len();
    a.iter()
        .map(|row| (0..d).map(|c| (0..d).map(|r| row[r] * q[r][c]).sum()).collect())
        .collect()
}

pub fn item_ids(n: usize) -> Vec<ItemId> {
    (0..n).map(|i| format!("item_{i:05}")).collect()
}

/// Stratum of item `i` for planted fixtures: contiguous thirds in the order
/// Aesthetic, Ambiguous, Unaesthetic, with remainders going to the earlier
/// blocks.
pub fn planted_stratum(i: usize, n: usize) -> Stratum {
    let base = n / 3;
    let extra = n % 3;
    let first = base + usize::from(extra > 0);
    let second = first + base + usize::from(extra > 1);
    if i < first {
        Stratum::Aesthetic
    } else if i < second {
        Stratum::Ambiguous
    } else {
        Stratum::Unaesthetic
    }
}

fn planted_score(stratum: Stratum) -> f64 {
    match stratum {
        Stratum::Aesthetic => AESTHETIC_SCORE,
        Stratum::Ambiguous => AMBIGUOUS_SCORE,
        _ => UNAESTHETIC_SCORE,
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut rng = spec.seed.rng(Domain::Synth, 0);
    let ids = item_ids(n);
    let unscored: Vec<ItemMeta> = ids.iter().map(|id| ItemMeta::new(id.clone(), None)).collect();
    let tag = |side: &str| format!("synth:{}:{side}", spec.kind);
    let pair = |a: Matrix, b: Matrix, metas: Vec<ItemMeta>| -> Result<SynthOutput> {
        Ok(SynthOutput::Pair {
            a: EmbeddingSet::from_rows(ids.clone(), &a, tag("a"))?,
            b: EmbeddingSet::from_rows(ids.clone(), &b, tag("b"))?,
            metas,
        })
    };

    match spec.kind {
        SynthKind::Rotation => {
            let a = gaussian_matrix(&mut rng, n, d);
            let q = random_orthogonal(&mut rng, d)?;
            let b = rotate(&a, &q);
            pair(a, b, unscored)
        }
        SynthKind::Independent => {
            let a = gaussian_matrix(&mut rng, n, d);
            let b = gaussian_matrix(&mut rng, n, d);
            pair(a, b, unscored)
        }
        SynthKind::NoisePair => {
            let z = latent(&mut rng, n, d, spec.center_norm);
            let levels = vec![spec.noise; n];
            let a = add_noise(&mut rng, &z, &levels);
            let b = add_noise(&mut rng, &z, &levels);
            pair(a, b, unscored)
        }
        SynthKind::PlantedStrata => {
            let z = latent(&mut rng, n, d, spec.center_norm);
            let strata: Vec<Stratum> = (0..n).map(|i| planted_stratum(i, n)).collect();
            let levels: Vec<f64> = strata.iter().map(|&s| spec.strata_noise.level(s)).collect();
            let a = add_noise(&mut rng, &z, &levels);
            let b = add_noise(&mut rng, &z, &levels);
            let metas = ids
                .iter()
                .zip(&strata)
                .map(|(id, &s)| ItemMeta::new(id.clone(), Some(planted_score(s))))
                .collect();
            pair(a, b, metas)
        }
        SynthKind::LayerSweep => {
            let z = latent(&mut rng, n, d, spec.center_norm);
            let layers = spec.layer_schedule.len();
            let mut sets = Vec::with_capacity(layers);
            let mut names = Vec::with_capacity(layers);
            for (j, &lambda) in spec.layer_schedule.iter().enumerate() {
                let layer = add_noise(&mut rng, &z, &vec![lambda; n]);
                names.push(layer_file_stem(j, layers));
                sets.push(EmbeddingSet::from_rows(ids.clone(), &layer, tag(&format!("layer{j}")))?);
            }
            Ok(SynthOutput::Stack {
                stack: LayerStack::new(sets, names)?,
                reference: EmbeddingSet::from_rows(ids.clone(), &z, tag("reference"))?,
                metas: unscored,
            })
        }
    }
}

/// `layer_00`, `layer_01`, ... padded so lexicographic order is depth order.
pub fn layer_file_stem(j: usize, layers: usize) -> String {
    let width = layers.saturating_sub(1).to_string().len().max(2);
    format!("layer_{j:0width$}")
}

/// Writes a fixture as containers plus sidecars.
///
/// Pairs become `a.raln` and `b.raln`; stacks become `reference.raln` and
/// `layers/layer_NN.raln`.
pub fn write_fixture(output: &SynthOutput, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    match output {
        SynthOutput::Pair { a, b, metas } => {
            for (name, set) in [("a.raln", a), ("b.raln", b)] {
                let path = dir.join(name);
                save_container_with_meta(set, metas, &path)?;
                written.push(path);
            }
        }
        SynthOutput::Stack { stack, reference, metas } => {
            let path = dir.join("reference.raln");
            save_container_with_meta(reference, metas, &path)?;
            written.push(path);
            let layer_dir = dir.join("layers");
            fs::create_dir_all(&layer_dir).map_err(|e| Error::io(&layer_dir, e))?;
            for (set, name) in stack.layers().iter().zip(stack.names()) {
                let path = layer_dir.join(format!("{name}.raln"));
                save_container_with_meta(set, metas, &path)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
