//! Model choice from the indicator draws.
//!
//! Each kept sweep induces a partition of a covariate's levels: the connected
//! components of the graph with an edge `(k, j)` wherever `delta_kj = 0`.
//! The share of sweeps in which two levels sit in the same component is their
//! posterior similarity `pi_kj`. The selected partition minimizes the
//! posterior expected Binder loss, which up to constants is
//! `sum_{j < k} I(z_k = z_j) (1/2 - pi_kj)`.

mod binder;
mod refit;
mod report;

pub use binder::{
    binder_objective, minimize_binder, minimize_binder_with, BinderSolver, MAX_ENUMERATED_ITEMS,
};
pub use refit::{flat_prior_fit, refit_selected, FlatFit, RefitConfig, RefitCoefficient, RefitSummary};
pub use report::{selection_report, CovariateSelection, PairFusion, SelectionReport};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::design::UnionFind;
use crate::error::{FusionError, Result};
use crate::gibbs::{spec_hash, PosteriorDraws};

/// Symmetric co-clustering frequencies over levels `0..=c`, unit diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SimilarityMatrix {
    rows: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(FusionError::Config("similarity matrix must be square".into()));
            }
            if row[i] != 1.0 {
                return Err(FusionError::Config("similarity matrix needs a unit diagonal".into()));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) || v != rows[j][i] {
                    return Err(FusionError::Config(format!(
                        "similarity entry ({i}, {j}) = {v} is not a symmetric probability"
                    )));
                }
            }
        }
        Ok(SimilarityMatrix { rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

impl TryFrom<Vec<Vec<f64>>> for SimilarityMatrix {
    type Error = FusionError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SimilarityMatrix::new(rows)
    }
}

impl From<SimilarityMatrix> for Vec<Vec<f64>> {
    fn from(s: SimilarityMatrix) -> Self {
        s.rows
    }
}

/// Cluster label per level, canonical: labels appear in order of first
/// occurrence, so level 0 is always in cluster 0 (the baseline cluster whose
/// effect is pinned to 0).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    /// Relabels any labeling canonically.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = HashMap::new();
        let labels = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Partition { labels }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            labels: (0..n).collect(),
        }
    }

    pub fn single_cluster(n: usize) -> Self {
        Partition { labels: vec![0; n] }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_levels(&self) -> usize {
        self.labels.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Levels of each cluster, cluster 0 (containing level 0) first.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters()];
        for (level, &l) in self.labels.iter().enumerate() {
            out[l].push(level);
        }
        out
    }

    pub fn same_cluster(&self, a: usize, b: usize) -> bool {
        self.labels[a] == self.labels[b]
    }

    /// Every cluster is a run of consecutive levels.
    pub fn is_contiguous(&self) -> bool {
        self.labels.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1)
    }

    /// All levels fused with the baseline: the covariate drops out.
    pub fn is_excluded(&self) -> bool {
        self.n_clusters() == 1
    }
}

impl From<Vec<usize>> for Partition {
    fn from(labels: Vec<usize>) -> Self {
        Partition::from_labels(&labels)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.labels
    }
}

fn check_draws(draws: &PosteriorDraws, h: usize) -> Result<()> {
    let meta = &draws.meta;
    if spec_hash(&meta.specs, &meta.hypers) != meta.spec_hash {
        return Err(FusionError::Provenance(
            "stored spec hash does not match the stored specs".into(),
        ));
    }
    if h >= meta.specs.len() {
        return Err(FusionError::Config(format!("no covariate with index {h}")));
    }
    Ok(())
}

/// The partition of levels `0..=c` induced by one sweep.
pub fn sweep_partition(draws: &PosteriorDraws, row: usize, h: usize) -> Partition {
    let spec = &draws.meta.specs[h];
    let mut uf = UnionFind::new(spec.c() + 1);
    for (i, &(k, j)) in spec.pattern.pairs().iter().enumerate() {
        if !draws.delta_bit(row, h, i) {
            uf.union(k, j);
        }
    }
    let roots: Vec<usize> = (0..=spec.c()).map(|k| uf.find(k)).collect();
    Partition::from_labels(&roots)
}

/// Posterior similarity matrix of covariate `h` from per-sweep components.
pub fn posterior_similarity(draws: &PosteriorDraws, h: usize) -> Result<SimilarityMatrix> {
    check_draws(draws, h)?;
    let n = draws.meta.specs[h].c() + 1;
    let m = draws.n_rows();
    if m == 0 {
        return Err(FusionError::Config("no draws".into()));
    }
    let mut counts = vec![vec![0usize; n]; n];
    for row in 0..m {
        let p = sweep_partition(draws, row, h);
        for a in 0..n {
            for b in 0..a {
                if p.same_cluster(a, b) {
                    counts[a][b] += 1;
                }
            }
        }
    }
    let mut rows = vec![vec![1.0; n]; n];
    for a in 0..n {
        for b in 0..a {
            let v = counts[a][b] as f64 / m as f64;
            rows[a][b] = v;
            rows[b][a] = v;
        }
    }
    SimilarityMatrix::new(rows)
}

/// Most frequent per-sweep partition (ties: smallest labeling).
pub fn modal_partition(draws: &PosteriorDraws, h: usize) -> Result<Partition> {
    check_draws(draws, h)?;
    let mut counts: HashMap<Partition, usize> = HashMap::new();
    for row in 0..draws.n_rows() {
        *counts.entry(sweep_partition(draws, row, h)).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(p, _)| p)
        .ok_or_else(|| FusionError::Config("no draws".into()))
}

/// `1 - mean(delta_kj)` for every pair of the pattern.
pub fn pair_fusion_frequencies(draws: &PosteriorDraws, h: usize) -> Result<Vec<PairFusion>> {
    check_draws(draws, h)?;
    let spec = &draws.meta.specs[h];
    let m = draws.n_rows() as f64;
    Ok(spec
        .pattern
        .pairs()
        .iter()
        .enumerate()
        .map(|(i, &(k, j))| {
            let zeros = (0..draws.n_rows()).filter(|&r| !draws.delta_bit(r, h, i)).count();
            PairFusion {
                k,
                j,
                probability: zeros as f64 / m,
            }
        })
        .collect())
}
