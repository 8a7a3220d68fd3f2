use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{
    binder_objective, minimize_binder, pair_fusion_frequencies, posterior_similarity,
    refit_selected, Partition, RefitConfig, RefitSummary, SimilarityMatrix,
};
use crate::design::{CovariateSpec, DesignMatrix, ScaleType};
use crate::error::{FusionError, Result};
use crate::exec::Exec;
use crate::gibbs::PosteriorDraws;
use crate::prior::HyperParams;

/// Posterior probability that the effects of levels `k` and `j` are fused,
/// `1 - mean(delta_kj)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFusion {
    pub k: usize,
    pub j: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSelection {
    pub name: String,
    pub levels: Vec<String>,
    pub similarity: SimilarityMatrix,
    pub partition: Partition,
    pub binder_objective: f64,
    /// Every level fused with the baseline.
    pub excluded: bool,
    pub pair_fusion: Vec<PairFusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub spec_hash: String,
    pub n_draws: usize,
    pub covariates: Vec<CovariateSelection>,
    pub refit: RefitSummary,
}

/// Similarity, Binder partition and pair fusion frequencies for every
/// covariate, followed by the flat-prior refit of the selected model.
/// Ordinal covariates are restricted to partitions into runs of levels.
pub fn selection_report(
    draws: &PosteriorDraws,
    design: &DesignMatrix,
    y: &DVector<f64>,
    specs: &[CovariateSpec],
    hypers: &[HyperParams],
    refit: &RefitConfig,
    exec: Exec,
) -> Result<SelectionReport> {
    draws.meta.check_provenance(specs, hypers)?;
    let covariates = exec.try_map(specs.len(), |h| -> Result<CovariateSelection> {
        let spec = &specs[h];
        let similarity = posterior_similarity(draws, h)?;
        let partition = minimize_binder(&similarity, spec.scale == ScaleType::Ordinal);
        Ok(CovariateSelection {
            name: spec.name.clone(),
            levels: spec.levels.clone(),
            binder_objective: binder_objective(&similarity, &partition),
            excluded: partition.is_excluded(),
            pair_fusion: pair_fusion_frequencies(draws, h)?,
            similarity,
            partition,
        })
    })?;
    let partitions: Vec<Partition> = covariates.iter().map(|c| c.partition.clone()).collect();
    let refit = refit_selected(design, y, specs, &partitions, refit)?;
    Ok(SelectionReport {
        spec_hash: draws.meta.spec_hash.clone(),
        n_draws: draws.n_rows(),
        covariates,
        refit,
    })
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

impl SelectionReport {
    /// Writes `selection.json`, `similarity_<covariate>.csv` per covariate and
    /// `refit.csv` into `dir`; returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let json = dir.join("selection.json");
        let f = File::create(&json).map_err(|e| FusionError::io(&json, e))?;
        serde_json::to_writer_pretty(BufWriter::new(f), self)?;
        written.push(json);
        for c in &self.covariates {
            let path = dir.join(format!("similarity_{}.csv", file_safe(&c.name)));
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec![String::new()];
            header.extend(c.levels.iter().cloned());
            w.write_record(&header)?;
            for (label, row) in c.levels.iter().zip(c.similarity.rows()) {
                let mut rec = vec![label.clone()];
                rec.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
            w.flush().map_err(|e| FusionError::io(&path, e))?;
            written.push(path);
        }
        let refit = dir.join("refit.csv");
        self.refit.write_csv(&refit)?;
        written.push(refit);
        Ok(written)
    }

    pub fn read_json(path: &Path) -> Result<SelectionReport> {
        let f = File::open(path).map_err(|e| FusionError::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}
