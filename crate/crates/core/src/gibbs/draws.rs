use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChainState, IatSummary, Model, SamplerConfig};
use crate::design::CovariateSpec;
use crate::error::{FusionError, Result};
use crate::gibbs::integrated_autocorrelation_time;
use crate::prior::{HyperParams, IndicatorState};

const MAGIC: &[u8; 8] = b"EFDRAWS1";

/// Hex SHA-256 of the covariate specs and hyperparameters; stored with draws
/// so later stages can tell whether they were produced for the same model.
pub fn spec_hash(specs: &[CovariateSpec], hypers: &[HyperParams]) -> String {
    let json = serde_json::to_vec(&(specs, hypers)).expect("specs serialize");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawsFormat {
    Csv,
    Bin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawsMeta {
    pub seed: u64,
    /// Chains held, in order.
    pub chains: Vec<u64>,
    pub config: SamplerConfig,
    pub specs: Vec<CovariateSpec>,
    pub hypers: Vec<HyperParams>,
    pub spec_hash: String,
    pub crate_version: String,
}

impl DrawsMeta {
    pub fn new(model: &Model, config: &SamplerConfig, chain: u64) -> Self {
        DrawsMeta {
            seed: config.seed,
            chains: vec![chain],
            config: config.clone(),
            specs: model.specs.clone(),
            hypers: model.hypers.clone(),
            spec_hash: spec_hash(&model.specs, &model.hypers),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn n_coef(&self) -> usize {
        1 + self.specs.iter().map(|s| s.c()).sum::<usize>()
    }

    fn n_indicators(&self) -> usize {
        self.specs.iter().map(|s| s.pattern.len()).sum()
    }

    fn words_per_row(&self) -> usize {
        self.n_indicators().div_ceil(64)
    }

    /// Fails unless these draws were produced for exactly `specs`/`hypers`.
    pub fn check_provenance(&self, specs: &[CovariateSpec], hypers: &[HyperParams]) -> Result<()> {
        let expected = spec_hash(specs, hypers);
        if self.spec_hash != expected || spec_hash(&self.specs, &self.hypers) != expected {
            return Err(FusionError::Provenance(format!(
                "draws were produced for model {}, current model is {}",
                self.spec_hash, expected
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    format: DrawsFormat,
    n_rows: usize,
    meta: DrawsMeta,
}

/// Stored posterior draws, row per kept sweep. Indicators are packed as bits
/// in covariate then pattern order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub meta: DrawsMeta,
    /// Row-major, `n_rows x n_coef`.
    pub beta: Vec<f64>,
    pub sigma2: Vec<f64>,
    /// Row-major, `n_rows x n_covariates`.
    pub tau2: Vec<f64>,
    pub g0_scale: Vec<f64>,
    delta: Vec<u64>,
}

impl PosteriorDraws {
    pub fn with_capacity(meta: DrawsMeta, rows: usize) -> Self {
        let (p, h, w) = (meta.n_coef(), meta.specs.len(), meta.words_per_row());
        PosteriorDraws {
            beta: Vec::with_capacity(rows * p),
            sigma2: Vec::with_capacity(rows),
            tau2: Vec::with_capacity(rows * h),
            g0_scale: Vec::with_capacity(rows * h),
            delta: Vec::with_capacity(rows * w),
            meta,
        }
    }

    pub fn push(&mut self, state: &ChainState) {
        self.beta.extend_from_slice(state.beta.as_slice());
        self.sigma2.push(state.sigma2);
        self.tau2.extend_from_slice(&state.tau2);
        self.g0_scale.extend_from_slice(&state.g0_scale);
        let mut words = vec![0u64; self.meta.words_per_row()];
        let mut bit = 0;
        for d in &state.delta {
            for &b in d.bits() {
                if b {
                    words[bit / 64] |= 1 << (bit % 64);
                }
                bit += 1;
            }
        }
        self.delta.extend(words);
    }

    pub fn n_rows(&self) -> usize {
        self.sigma2.len()
    }

    pub fn n_coef(&self) -> usize {
        self.meta.n_coef()
    }

    pub fn n_covariates(&self) -> usize {
        self.meta.specs.len()
    }

    pub fn beta_row(&self, row: usize) -> &[f64] {
        let p = self.n_coef();
        &self.beta[row * p..(row + 1) * p]
    }

    pub fn beta_column(&self, col: usize) -> Vec<f64> {
        let p = self.n_coef();
        self.beta.iter().skip(col).step_by(p).copied().collect()
    }

    pub fn tau2_column(&self, h: usize) -> Vec<f64> {
        self.tau2.iter().skip(h).step_by(self.n_covariates()).copied().collect()
    }

    fn bit_offset(&self, h: usize) -> usize {
        self.meta.specs[..h].iter().map(|s| s.pattern.len()).sum()
    }

    fn bit(&self, row: usize, index: usize) -> bool {
        let w = self.meta.words_per_row();
        self.delta[row * w + index / 64] >> (index % 64) & 1 == 1
    }

    /// Indicator of pair `pair` (pattern index) of covariate `h` in `row`.
    pub fn delta_bit(&self, row: usize, h: usize, pair: usize) -> bool {
        self.bit(row, self.bit_offset(h) + pair)
    }

    pub fn delta(&self, row: usize, h: usize) -> IndicatorState {
        let spec = &self.meta.specs[h];
        let off = self.bit_offset(h);
        let bits = (0..spec.pattern.len()).map(|i| self.bit(row, off + i)).collect();
        IndicatorState::from_bits(&spec.pattern, bits).expect("stored bits match pattern")
    }

    /// Stacks chains that share specs and configuration.
    pub fn concat(parts: &[PosteriorDraws]) -> Result<PosteriorDraws> {
        let first = parts
            .first()
            .ok_or_else(|| FusionError::Config("no draws to combine".into()))?;
        let mut out = first.clone();
        for p in &parts[1..] {
            if p.meta.spec_hash != first.meta.spec_hash || p.meta.config != first.meta.config {
                return Err(FusionError::Provenance("chains come from different runs".into()));
            }
            out.meta.chains.extend(&p.meta.chains);
            out.beta.extend(&p.beta);
            out.sigma2.extend(&p.sigma2);
            out.tau2.extend(&p.tau2);
            out.g0_scale.extend(&p.g0_scale);
            out.delta.extend(&p.delta);
        }
        Ok(out)
    }

    /// Column names of the flat representation, in storage order.
    pub fn column_names(&self) -> Vec<String> {
        let specs = &self.meta.specs;
        let mut names = vec!["mu".to_string()];
        for s in specs {
            for l in &s.levels[1..] {
                names.push(format!("beta[{}={}]", s.name, l));
            }
        }
        names.push("sigma2".into());
        names.extend(specs.iter().map(|s| format!("tau2[{}]", s.name)));
        names.extend(specs.iter().map(|s| format!("G0[{}]", s.name)));
        for s in specs {
            for &(k, j) in s.pattern.pairs() {
                names.push(format!("delta[{}]({},{})", s.name, k, j));
            }
        }
        names
    }

    fn reals(&self, row: usize) -> impl Iterator<Item = f64> + '_ {
        let h = self.n_covariates();
        self.beta_row(row)
            .iter()
            .copied()
            .chain(std::iter::once(self.sigma2[row]))
            .chain(self.tau2[row * h..(row + 1) * h].iter().copied())
            .chain(self.g0_scale[row * h..(row + 1) * h].iter().copied())
    }

    fn n_reals(&self) -> usize {
        self.n_coef() + 1 + 2 * self.n_covariates()
    }

    pub fn iat_summary(&self) -> IatSummary {
        let names = self.column_names();
        let n_reals = self.n_reals();
        let rows = self.n_rows();
        let mut series = vec![Vec::with_capacity(rows); n_reals];
        for r in 0..rows {
            for (col, v) in series.iter_mut().zip(self.reals(r)) {
                col.push(v);
            }
        }
        let entries = names
            .into_iter()
            .zip(&series)
            .map(|(name, s)| (name, integrated_autocorrelation_time(s)))
            .collect();
        IatSummary { entries }
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    /// Writes the draws to `path` and metadata to `<path>.meta.json`.
    pub fn write(&self, path: &Path, format: DrawsFormat) -> Result<()> {
        match format {
            DrawsFormat::Csv => self.write_csv(path)?,
            DrawsFormat::Bin => self.write_bin(path)?,
        }
        let side = Self::sidecar_path(path);
        let file = File::create(&side).map_err(|e| FusionError::io(&side, e))?;
        let sidecar = Sidecar {
            format,
            n_rows: self.n_rows(),
            meta: self.meta.clone(),
        };
        serde_json::to_writer_pretty(BufWriter::new(file), &sidecar)?;
        Ok(())
    }

    fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.column_names())?;
        let d = self.meta.n_indicators();
        for row in 0..self.n_rows() {
            let mut rec: Vec<String> = self.reals(row).map(|v| v.to_string()).collect();
            rec.extend((0..d).map(|i| if self.bit(row, i) { "1" } else { "0" }.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| FusionError::io(path, e))
    }

    fn write_bin(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| FusionError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| FusionError::io(path, e);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&(self.n_rows() as u64).to_le_bytes()).map_err(io)?;
        for row in 0..self.n_rows() {
            for v in self.reals(row) {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        for word in &self.delta {
            w.write_all(&word.to_le_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads draws written by [`PosteriorDraws::write`].
    pub fn read(path: &Path) -> Result<PosteriorDraws> {
        let side = Self::sidecar_path(path);
        let file = File::open(&side).map_err(|e| FusionError::io(&side, e))?;
        let sidecar: Sidecar = serde_json::from_reader(BufReader::new(file))?;
        for s in &sidecar.meta.specs {
            s.validate()?;
        }
        let mut out = PosteriorDraws::with_capacity(sidecar.meta, sidecar.n_rows);
        let rows = match sidecar.format {
            DrawsFormat::Csv => out.read_csv(path)?,
            DrawsFormat::Bin => out.read_bin(path, sidecar.n_rows)?,
        };
        if rows != sidecar.n_rows {
            return Err(FusionError::DrawsFormat(format!(
                "expected {} rows, found {rows}",
                sidecar.n_rows
            )));
        }
        Ok(out)
    }

    fn push_reals(&mut self, reals: &[f64]) {
        let (p, h) = (self.n_coef(), self.n_covariates());
        self.beta.extend_from_slice(&reals[..p]);
        self.sigma2.push(reals[p]);
        self.tau2.extend_from_slice(&reals[p + 1..p + 1 + h]);
        self.g0_scale.extend_from_slice(&reals[p + 1 + h..p + 1 + 2 * h]);
    }

    fn read_csv(&mut self, path: &Path) -> Result<usize> {
        let mut r = csv::Reader::from_path(path)?;
        let names = self.column_names();
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header != names {
            return Err(FusionError::DrawsFormat("header does not match metadata".into()));
        }
        let n_reals = self.n_reals();
        let w = self.meta.words_per_row();
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec?;
            let bad = |what: &str| FusionError::DrawsFormat(format!("row {}: bad {what}", rows + 1));
            let reals = rec
                .iter()
                .take(n_reals)
                .map(|f| f.parse::<f64>().map_err(|_| bad("number")))
                .collect::<Result<Vec<_>>>()?;
            let mut words = vec![0u64; w];
            for (i, f) in rec.iter().skip(n_reals).enumerate() {
                match f {
                    "1" => words[i / 64] |= 1 << (i % 64),
                    "0" => {}
                    _ => return Err(bad("indicator")),
                }
            }
            self.push_reals(&reals);
            self.delta.extend(words);
            rows += 1;
        }
        Ok(rows)
    }

    fn read_bin(&mut self, path: &Path, n_rows: usize) -> Result<usize> {
        let file = File::open(path).map_err(|e| FusionError::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| FusionError::io(path, e))?;
        let n_reals = self.n_reals();
        let w = self.meta.words_per_row();
        let expected = 16 + 8 * n_rows * (n_reals + w);
        if bytes.len() != expected || &bytes[..8] != MAGIC {
            return Err(FusionError::DrawsFormat("binary layout does not match metadata".into()));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        if word(8) as usize != n_rows {
            return Err(FusionError::DrawsFormat("row count mismatch".into()));
        }
        let mut pos = 16;
        for _ in 0..n_rows {
            let reals: Vec<f64> = (0..n_reals).map(|k| f64::from_bits(word(pos + 8 * k))).collect();
            pos += 8 * n_reals;
            self.push_reals(&reals);
        }
        for _ in 0..n_rows * w {
            self.delta.push(word(pos));
            pos += 8;
        }
        Ok(n_rows)
    }
}
