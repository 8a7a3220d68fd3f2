//! Categorical covariates, fusion patterns and the dummy-coded design matrix.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};
use crate::linalg;
use crate::prior::{G0Prior, HyperParams};

/// Measurement scale of a categorical covariate. Determines the default
/// fusion pattern and the precision scaling constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleType {
    /// Any pair of levels may fuse.
    Nominal,
    /// Only adjacent levels may fuse.
    Ordinal,
    /// Levels may only fuse with the baseline (plain variable selection).
    Selection,
}

/// The fixed set of level pairs `(k, j)`, `k > j`, whose effect difference is
/// subject to fusion. Pairs are kept sorted lexicographically by `(k, j)`;
/// that order is the canonical order of indicator bits everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPattern", into = "RawPattern")]
pub struct FusionPattern {
    n_levels: usize,
    pairs: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct RawPattern {
    n_levels: usize,
    pairs: Vec<(usize, usize)>,
}

impl TryFrom<RawPattern> for FusionPattern {
    type Error = FusionError;
    fn try_from(raw: RawPattern) -> Result<Self> {
        FusionPattern::custom(raw.n_levels - 1, raw.pairs)
    }
}

impl From<FusionPattern> for RawPattern {
    fn from(p: FusionPattern) -> Self {
        RawPattern {
            n_levels: p.n_levels,
            pairs: p.pairs,
        }
    }
}

impl FusionPattern {
    /// All `(c+1 choose 2)` pairs.
    pub fn nominal(c: usize) -> Self {
        let pairs = (1..=c).flat_map(|k| (0..k).map(move |j| (k, j))).collect();
        FusionPattern {
            n_levels: c + 1,
            pairs,
        }
    }

    pub fn ordinal(c: usize) -> Self {
        FusionPattern {
            n_levels: c + 1,
            pairs: (1..=c).map(|k| (k, k - 1)).collect(),
        }
    }

    pub fn selection(c: usize) -> Self {
        FusionPattern {
            n_levels: c + 1,
            pairs: (1..=c).map(|k| (k, 0)).collect(),
        }
    }

    pub fn for_scale(scale: ScaleType, c: usize) -> Self {
        match scale {
            ScaleType::Nominal => Self::nominal(c),
            ScaleType::Ordinal => Self::ordinal(c),
            ScaleType::Selection => Self::selection(c),
        }
    }

    /// Arbitrary pattern over levels `0..=c`. Pairs may be given in either
    /// orientation; the induced graph must be connected.
    pub fn custom(c: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if c == 0 {
            return Err(FusionError::Config("a covariate needs at least two levels".into()));
        }
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            let (k, j) = if a > b { (a, b) } else { (b, a) };
            if k == j || k > c {
                return Err(FusionError::Config(format!("invalid fusion pair ({a}, {b})")));
            }
            set.insert((k, j));
        }
        let pattern = FusionPattern {
            n_levels: c + 1,
            pairs: set.into_iter().collect(),
        };
        if !pattern.is_connected() {
            return Err(FusionError::SingularStructure(format!(
                "custom pattern on {} levels",
                c + 1
            )));
        }
        Ok(pattern)
    }

    /// Number of non-baseline levels `c`.
    pub fn c(&self) -> usize {
        self.n_levels - 1
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn index_of(&self, k: usize, j: usize) -> Option<usize> {
        let key = if k > j { (k, j) } else { (j, k) };
        self.pairs.binary_search(&key).ok()
    }

    pub fn contains(&self, k: usize, j: usize) -> bool {
        self.index_of(k, j).is_some()
    }

    pub fn is_connected(&self) -> bool {
        let mut uf = UnionFind::new(self.n_levels);
        for &(k, j) in &self.pairs {
            uf.union(k, j);
        }
        (1..self.n_levels).all(|k| uf.find(k) == uf.find(0))
    }
}

/// Plain union-find over `0..n`.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller root so component ids are stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// One categorical predictor. Level 0 is the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub levels: Vec<String>,
    pub scale: ScaleType,
    pub pattern: FusionPattern,
    /// Soft restrictions: pairs whose indicator is held at 1.
    #[serde(default)]
    pub frozen: Vec<(usize, usize)>,
}

impl CovariateSpec {
    pub fn new(name: impl Into<String>, levels: Vec<String>, scale: ScaleType) -> Result<Self> {
        let name = name.into();
        if levels.len() < 2 {
            return Err(FusionError::Config(format!(
                "covariate `{name}` needs at least two levels"
            )));
        }
        let mut seen = BTreeSet::new();
        for l in &levels {
            if !seen.insert(l.as_str()) {
                return Err(FusionError::Config(format!(
                    "covariate `{name}` has duplicate level `{l}`"
                )));
            }
        }
        let pattern = FusionPattern::for_scale(scale, levels.len() - 1);
        Ok(CovariateSpec {
            name,
            levels,
            scale,
            pattern,
            frozen: Vec::new(),
        })
    }

    /// Spec with levels named `"0".."c"`, handy for simulations.
    pub fn with_level_count(name: impl Into<String>, n_levels: usize, scale: ScaleType) -> Result<Self> {
        Self::new(name, (0..n_levels).map(|i| i.to_string()).collect(), scale)
    }

    pub fn with_pattern(mut self, pattern: FusionPattern) -> Result<Self> {
        if pattern.n_levels() != self.levels.len() {
            return Err(FusionError::Config(format!(
                "pattern for `{}` has {} levels, spec has {}",
                self.name,
                pattern.n_levels(),
                self.levels.len()
            )));
        }
        self.pattern = pattern;
        self.validate_frozen()?;
        Ok(self)
    }

    pub fn with_frozen(mut self, frozen: Vec<(usize, usize)>) -> Result<Self> {
        self.frozen = frozen
            .into_iter()
            .map(|(a, b)| if a > b { (a, b) } else { (b, a) })
            .collect();
        self.validate_frozen()?;
        Ok(self)
    }

    fn validate_frozen(&self) -> Result<()> {
        for &(k, j) in &self.frozen {
            if !self.pattern.contains(k, j) {
                return Err(FusionError::Config(format!(
                    "frozen pair ({k}, {j}) of `{}` is not subject to fusion",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Full validation, used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let fresh = CovariateSpec::new(self.name.clone(), self.levels.clone(), self.scale)?;
        fresh.with_pattern(self.pattern.clone())?.with_frozen(self.frozen.clone())?;
        Ok(())
    }

    pub fn c(&self) -> usize {
        self.levels.len() - 1
    }

    /// Precision scaling constant: `c/2` for nominal covariates, 1 otherwise.
    pub fn gamma(&self) -> f64 {
        match self.scale {
            ScaleType::Nominal => self.c() as f64 / 2.0,
            ScaleType::Ordinal | ScaleType::Selection => 1.0,
        }
    }

    pub fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Column {
    Intercept,
    Level { covariate: usize, level: usize },
}

/// `[1, X_1, ..., X_p]` with one 0/1 column per non-baseline level.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub columns: Vec<Column>,
    pub(crate) blocks: Vec<Range<usize>>,
}

impl DesignMatrix {
    /// Builds the dummy coding from per-covariate level codes
    /// (`codes[h][i]` is the level of row `i` for covariate `h`).
    pub fn from_codes(specs: &[CovariateSpec], codes: &[Vec<usize>]) -> Result<Self> {
        if specs.len() != codes.len() {
            return Err(FusionError::Config("one code vector per covariate expected".into()));
        }
        let n = codes.first().map_or(0, Vec::len);
        let mut columns = vec![Column::Intercept];
        let mut blocks = Vec::with_capacity(specs.len());
        for (h, spec) in specs.iter().enumerate() {
            let start = columns.len();
            columns.extend((1..=spec.c()).map(|level| Column::Level { covariate: h, level }));
            blocks.push(start..columns.len());
        }
        let mut x = DMatrix::zeros(n, columns.len());
        for i in 0..n {
            x[(i, 0)] = 1.0;
        }
        for (h, (spec, col)) in specs.iter().zip(codes).enumerate() {
            if col.len() != n {
                return Err(FusionError::Config("code vectors differ in length".into()));
            }
            let mut counts = vec![0usize; spec.levels.len()];
            for (i, &lvl) in col.iter().enumerate() {
                if lvl > spec.c() {
                    return Err(FusionError::UnknownLevel {
                        label: lvl.to_string(),
                        column: spec.name.clone(),
                        row: i,
                    });
                }
                counts[lvl] += 1;
                if lvl > 0 {
                    x[(i, blocks[h].start + lvl - 1)] = 1.0;
                }
            }
            if let Some(missing) = counts.iter().skip(1).position(|&c| c == 0) {
                return Err(FusionError::UnobservedLevel {
                    covariate: spec.name.clone(),
                    level: spec.levels[missing + 1].clone(),
                });
            }
        }
        let design = DesignMatrix { x, columns, blocks };
        let rank = linalg::numerical_rank(&design.x);
        if rank < design.ncols() {
            return Err(FusionError::RankDeficient {
                rank,
                cols: design.ncols(),
            });
        }
        Ok(design)
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_covariates(&self) -> usize {
        self.blocks.len()
    }

    /// Column range of covariate `h`'s dummy block.
    pub fn block(&self, h: usize) -> Range<usize> {
        self.blocks[h].clone()
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    /// Splits a coefficient vector into the intercept and per-covariate
    /// level effects, with the baseline effect 0 prepended to each block.
    pub fn level_effects(&self, beta: &[f64]) -> (f64, Vec<Vec<f64>>) {
        let effects = self
            .blocks
            .iter()
            .map(|b| std::iter::once(0.0).chain(beta[b.clone()].iter().copied()).collect())
            .collect();
        (beta[0], effects)
    }
}

/// Result of reading a CSV file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub design: DesignMatrix,
    pub response: DVector<f64>,
    /// Level codes per covariate for the retained rows.
    pub codes: Vec<Vec<usize>>,
    /// Rows dropped because a used cell was missing.
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

/// Reads a headered, comma-separated file. Rows with a missing value (empty
/// or `NA`) in any used column are dropped and counted.
pub fn ingest_csv(path: &Path, response_column: &str, specs: &[CovariateSpec]) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => FusionError::io(path, io),
                _ => unreachable!(),
            },
            _ => FusionError::Csv(e),
        })?;
    let header = reader.headers()?.clone();
    let col_index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let find = |name: &str| {
        col_index
            .get(name)
            .copied()
            .ok_or_else(|| FusionError::MissingColumn(name.to_string()))
    };
    let y_col = find(response_column)?;
    let cov_cols = specs.iter().map(|s| find(&s.name)).collect::<Result<Vec<_>>>()?;

    let mut response = Vec::new();
    let mut codes: Vec<Vec<usize>> = vec![Vec::new(); specs.len()];
    let mut dropped = 0;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        // data rows are numbered from 1, header excluded
        let row = row_idx + 1;
        let used = std::iter::once(y_col).chain(cov_cols.iter().copied());
        if used.clone().any(|c| record.get(c).is_none_or(is_missing)) {
            dropped += 1;
            continue;
        }
        let raw_y = record.get(y_col).unwrap().trim();
        let y: f64 = raw_y.parse().map_err(|_| FusionError::BadResponse {
            value: raw_y.to_string(),
            row,
        })?;
        if !y.is_finite() {
            return Err(FusionError::BadResponse {
                value: raw_y.to_string(),
                row,
            });
        }
        response.push(y);
        for ((spec, &c), out) in specs.iter().zip(&cov_cols).zip(codes.iter_mut()) {
            let label = record.get(c).unwrap().trim();
            let lvl = spec.level_index(label).ok_or_else(|| FusionError::UnknownLevel {
                label: label.to_string(),
                column: spec.name.clone(),
                row,
            })?;
            out.push(lvl);
        }
    }
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing values");
    }
    let design = DesignMatrix::from_codes(specs, &codes)?;
    Ok(Ingested {
        design,
        response: DVector::from_vec(response),
        codes,
        dropped_rows: dropped,
    })
}

/// Centers and scales `y` to unit sample variance.
pub fn standardize(y: &mut DVector<f64>) {
    let n = y.len() as f64;
    if n < 2.0 {
        return;
    }
    let mean = y.mean();
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd > 0.0 {
        y.apply(|v| *v = (*v - mean) / sd);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Sufficient conditions for a proper posterior under the improper
/// `p(mu, sigma2) ∝ 1/sigma2` prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProprietyReport {
    pub checks: Vec<ConditionCheck>,
    pub q: usize,
    pub t: usize,
    pub sse: Option<f64>,
}

impl ProprietyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&ConditionCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Evaluates (a) `G_h0 > 0`, (b) `c_h + 2 g_h0 > q - t`, (c) `n - 1 + 2 s0 > 0`
/// and, when a response is supplied, `2 S0 + SSE > 0`.
pub fn check_propriety(
    design: &DesignMatrix,
    specs: &[CovariateSpec],
    hypers: &[HyperParams],
    response: Option<&DVector<f64>>,
    s0: f64,
    big_s0: f64,
) -> Result<ProprietyReport> {
    let n = design.nrows();
    let q: usize = design.blocks.iter().map(|b| b.len()).sum();
    let xb = design.x.columns(1, q).into_owned();
    let mut centered = xb.clone();
    for mut col in centered.column_iter_mut() {
        let m = if n > 0 { col.sum() / n as f64 } else { 0.0 };
        col.add_scalar_mut(-m);
    }
    let t = if n == 0 { 0 } else { linalg::numerical_rank(&centered) };

    let mut checks = Vec::new();
    for (h, (spec, hp)) in specs.iter().zip(hypers).enumerate() {
        let (ok, what) = match hp.g0_prior {
            G0Prior::Fixed(g) => (g > 0.0, format!("G0 = {g}")),
            G0Prior::Exponential { mean } => (mean > 0.0, format!("G0 ~ Exp(mean {mean})")),
        };
        checks.push(ConditionCheck {
            name: format!("(a) covariate {h}"),
            passed: ok,
            detail: what,
        });
        let lhs = spec.c() as f64 + 2.0 * hp.g0;
        checks.push(ConditionCheck {
            name: format!("(b) covariate {h}"),
            passed: lhs > (q - t) as f64,
            detail: format!("c + 2 g0 = {lhs} vs q - t = {}", q - t),
        });
    }
    let lhs_c = n as f64 - 1.0 + 2.0 * s0;
    checks.push(ConditionCheck {
        name: "(c)".into(),
        passed: lhs_c > 0.0,
        detail: format!("n - f + 2 s0 = {lhs_c}"),
    });
    let sse = match response {
        Some(y) => {
            let sse = linalg::projection_sse(&design.x, y)?;
            // residual noise of a perfect fit is at rounding level
            let scale = y.norm_squared().max(1.0);
            let positive = 2.0 * big_s0 + sse > 1e-12 * scale;
            checks.push(ConditionCheck {
                name: "2 S0 + SSE > 0".into(),
                passed: positive,
                detail: format!("SSE = {sse}"),
            });
            Some(sse)
        }
        None => None,
    };
    Ok(ProprietyReport { checks, q, t, sse })
}
