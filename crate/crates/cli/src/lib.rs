//! Command implementations behind the `effusion` binary.
//!
//! Every command reads one TOML file, derives all randomness from a single
//! seed and writes plain CSV/JSON outputs, so rerunning with the same inputs
//! reproduces the output files byte for byte.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use effect_fusion::design::{
    check_propriety, ingest_csv, standardize, CovariateSpec, FusionPattern, ProprietyReport,
    ScaleType,
};
use effect_fusion::gibbs::{
    run_chains, DrawsFormat, IatStats, IatSummary, Model, PosteriorDraws, SamplerConfig,
};
use effect_fusion::prior::{
    concentration_check, fusion_probability_curve, simulate_prior, ConcentrationCheck, G0Prior,
    HyperParams,
};
use effect_fusion::select::{selection_report, RefitConfig, SelectionReport};
use effect_fusion::simstudy::{run_study, StudyConfig, StudyReport};
use effect_fusion::{Exec, FusionError, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// One covariate as written in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateConfig {
    pub name: String,
    /// Level labels; the first is the baseline.
    pub levels: Vec<String>,
    pub scale: ScaleType,
    /// Custom fusable pairs `[k, j]`, replacing the scale's default pattern.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(usize, usize)>>,
    /// Pairs whose indicator is held at 1.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frozen: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0: Option<f64>,
    /// Fixed scale of the inverse-gamma prior on `tau2`.
    #[serde(default, rename = "G0", skip_serializing_if = "Option::is_none")]
    pub big_g0: Option<f64>,
    /// Mean of an exponential hyperprior on `G0` (instead of a fixed `G0`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl CovariateConfig {
    pub fn spec(&self) -> Result<CovariateSpec> {
        let mut spec = CovariateSpec::new(self.name.clone(), self.levels.clone(), self.scale)?;
        if let Some(pairs) = &self.pairs {
            let pattern = FusionPattern::custom(spec.c(), pairs.iter().copied())?;
            spec = spec.with_pattern(pattern)?;
        }
        if !self.frozen.is_empty() {
            spec = spec.with_frozen(self.frozen.clone())?;
        }
        Ok(spec)
    }

    pub fn hypers(&self) -> Result<HyperParams> {
        let d = HyperParams::default_for(self.scale);
        let g0_prior = match (self.big_g0, self.lambda) {
            (Some(_), Some(_)) => {
                return Err(FusionError::Config(format!(
                    "covariate `{}`: set either G0 or lambda, not both",
                    self.name
                )))
            }
            (Some(g), None) => G0Prior::Fixed(g),
            (None, Some(mean)) => G0Prior::Exponential { mean },
            (None, None) => d.g0_prior,
        };
        let h = HyperParams {
            r: self.r.unwrap_or(d.r),
            g0: self.g0.unwrap_or(d.g0),
            g0_prior,
        };
        h.validate()?;
        Ok(h)
    }
}

fn default_chains() -> usize {
    1
}

fn default_format() -> DrawsFormat {
    DrawsFormat::Csv
}

/// Configuration of `fit` (and, through the copy stored with the draws, of
/// `select`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// CSV input; relative paths are taken from the config file's directory.
    pub data: PathBuf,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_format")]
    pub format: DrawsFormat,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub refit: RefitConfig,
    pub covariates: Vec<CovariateConfig>,
}

impl RunConfig {
    pub fn specs(&self) -> Result<Vec<CovariateSpec>> {
        self.covariates.iter().map(CovariateConfig::spec).collect()
    }

    pub fn hypers(&self) -> Result<Vec<HyperParams>> {
        self.covariates.iter().map(CovariateConfig::hypers).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariates.is_empty() {
            return Err(FusionError::Config("at least one covariate required".into()));
        }
        if self.chains == 0 {
            return Err(FusionError::Config("chains must be at least 1".into()));
        }
        self.sampler.validate()?;
        self.specs()?;
        self.hypers()?;
        Ok(())
    }
}

/// Reads a TOML file; parse errors keep the line and column.
pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| FusionError::io(path, e))?;
    toml::from_str(&text).map_err(|e| FusionError::Config(format!("{}: {e}", path.display())))
}

/// Loads a run config and makes its data path absolute.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let mut cfg: RunConfig = read_toml(path)?;
    if cfg.data.is_relative() {
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data = base.join(&cfg.data);
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| FusionError::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FusionError::io(dir, e))
}

/// Runs `f` with `Parallel` inside a pool of `threads` workers, or with
/// `Sequential` when `threads == 1`.
pub fn with_threads<T>(threads: Option<usize>, f: impl FnOnce(Exec) -> T + Send) -> Result<T>
where
    T: Send,
{
    match threads {
        Some(0) => Err(FusionError::Config("thread count must be at least 1".into())),
        Some(1) => Ok(f(Exec::Sequential)),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| FusionError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(|| f(Exec::Parallel)))
        }
        None => Ok(f(Exec::default())),
    }
}

/// Command-line overrides shared by `fit`.
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub chains: Option<usize>,
    pub force: bool,
    pub standardize: bool,
    pub format: Option<DrawsFormat>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IatReport {
    /// Over the regression effects (intercept and level effects).
    pub effects: Option<IatStats>,
    /// Over every stored parameter.
    pub all: Option<IatStats>,
}

#[derive(Debug)]
pub struct FitOutput {
    pub out_dir: PathBuf,
    pub draws_path: PathBuf,
    pub draws: PosteriorDraws,
    pub propriety: ProprietyReport,
    pub iat: IatReport,
}

pub const RUN_FILE: &str = "run.json";

fn draws_file(format: DrawsFormat) -> &'static str {
    match format {
        DrawsFormat::Csv => "draws.csv",
        DrawsFormat::Bin => "draws.bin",
    }
}

/// Samples the posterior and writes the draws (with their sidecar), the
/// autocorrelation times, the propriety report and the resolved config.
pub fn cmd_fit(config: RunConfig, opts: &FitOptions) -> Result<FitOutput> {
    let mut cfg = config;
    if let Some(seed) = opts.seed {
        cfg.sampler.seed = seed;
        cfg.refit.seed = seed;
    }
    if let Some(c) = opts.chains {
        cfg.chains = c;
    }
    if let Some(f) = opts.format {
        cfg.format = f;
    }
    cfg.standardize |= opts.standardize;
    if let Some(out) = &opts.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    let out_dir = cfg
        .out
        .clone()
        .ok_or_else(|| FusionError::Config("no output directory (set `out` or --out)".into()))?;

    let specs = cfg.specs()?;
    let hypers = cfg.hypers()?;
    let data = ingest_csv(&cfg.data, &cfg.response, &specs)?;
    if data.dropped_rows > 0 {
        log::warn!("{} rows with missing values dropped", data.dropped_rows);
    }
    let mut y = data.response;
    if cfg.standardize {
        standardize(&mut y);
    }
    let propriety = check_propriety(
        &data.design,
        &specs,
        &hypers,
        Some(&y),
        cfg.sampler.s0,
        cfg.sampler.big_s0,
    )?;
    create_dir(&out_dir)?;
    write_json(&out_dir.join("propriety.json"), &propriety)?;
    if !propriety.passed() && !opts.force {
        let failed: Vec<String> = propriety
            .failures()
            .iter()
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect();
        return Err(FusionError::Propriety(failed.join("; ")));
    }

    let model = Model::new(&data.design, &y, &specs, &hypers, &cfg.sampler)?;
    let chains = run_chains(&model, &cfg.sampler, cfg.chains, Exec::default())?;
    let iat = chain_iat(&chains);
    let draws = PosteriorDraws::concat(&chains)?;

    let draws_path = out_dir.join(draws_file(cfg.format));
    draws.write(&draws_path, cfg.format)?;
    iat.write_csv(&out_dir.join("iat.csv"))?;
    let is_effect = |n: &str| n == "mu" || n.starts_with("beta[");
    let iat = IatReport {
        effects: iat.stats(is_effect),
        all: iat.stats(|_| true),
    };
    write_json(&out_dir.join("iat_summary.json"), &iat)?;
    // the stored copy omits the output directory so reruns elsewhere match
    write_json(&out_dir.join(RUN_FILE), &RunConfig { out: None, ..cfg.clone() })?;
    Ok(FitOutput {
        out_dir,
        draws_path,
        draws,
        propriety,
        iat,
    })
}

/// Per-parameter autocorrelation time averaged over chains.
fn chain_iat(chains: &[PosteriorDraws]) -> IatSummary {
    let per_chain: Vec<IatSummary> = chains.iter().map(PosteriorDraws::iat_summary).collect();
    let mut entries = per_chain[0].entries.clone();
    for (i, e) in entries.iter_mut().enumerate() {
        e.1 = per_chain.iter().map(|s| s.entries[i].1).sum::<f64>() / per_chain.len() as f64;
    }
    IatSummary { entries }
}

/// Selects a model per covariate from the draws in `draws_dir` and refits
/// it. The data and specs come from the config stored by `fit`, or from
/// `config` when given; either way they must match the draws' provenance.
pub fn cmd_select(
    draws_dir: &Path,
    config: Option<RunConfig>,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<SelectionReport> {
    let mut cfg = match config {
        Some(c) => c,
        None => {
            let path = draws_dir.join(RUN_FILE);
            let f = File::open(&path).map_err(|e| FusionError::io(&path, e))?;
            serde_json::from_reader(std::io::BufReader::new(f))?
        }
    };
    if let Some(s) = seed {
        cfg.refit.seed = s;
    }
    let draws_path = [DrawsFormat::Csv, DrawsFormat::Bin]
        .iter()
        .map(|f| draws_dir.join(draws_file(*f)))
        .find(|p| p.exists())
        .ok_or_else(|| {
            FusionError::io(
                draws_dir.join("draws.csv"),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no draws file"),
            )
        })?;
    let draws = PosteriorDraws::read(&draws_path)?;
    let specs = cfg.specs()?;
    let hypers = cfg.hypers()?;
    draws.meta.check_provenance(&specs, &hypers)?;
    let data = ingest_csv(&cfg.data, &cfg.response, &specs)?;
    let mut y = data.response;
    if cfg.standardize {
        standardize(&mut y);
    }
    let report = selection_report(&draws, &data.design, &y, &specs, &hypers, &cfg.refit, Exec::default())?;
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| draws_dir.join("selection"));
    create_dir(&out_dir)?;
    report.write(&out_dir)?;
    Ok(report)
}

/// Runs the simulation study and writes its tables.
pub fn cmd_simulate(
    config: StudyConfig,
    seed: Option<u64>,
    replicates: Option<usize>,
    out: &Path,
    threads: Option<usize>,
) -> Result<StudyReport> {
    let mut cfg = config;
    if let Some(s) = seed {
        cfg.design.seed = s;
    }
    if let Some(n) = replicates {
        cfg.design.n_replicates = n;
    }
    let report = with_threads(threads, |exec| run_study(&cfg, exec))??;
    create_dir(out)?;
    report.write(out)?;
    Ok(report)
}

/// Grid of `theta` values for the fusion probability curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            min: 0.0,
            max: 2.0,
            points: 401,
        }
    }
}

impl GridConfig {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points < 2 || !(self.max > self.min) {
            return Err(FusionError::Config("grid needs max > min and at least 2 points".into()));
        }
        let step = (self.max - self.min) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| self.min + i as f64 * step).collect())
    }
}

/// Configuration of `prior`: one covariate and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub covariate: CovariateConfig,
    pub n_draws: usize,
    pub seed: u64,
    /// Half-width of the bands used by the concentration check.
    pub band: f64,
    pub grid: GridConfig,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            covariate: CovariateConfig {
                name: "x".into(),
                levels: (0..4).map(|l| l.to_string()).collect(),
                scale: ScaleType::Nominal,
                pairs: None,
                frozen: vec![],
                r: Some(1e4),
                g0: Some(5.0),
                big_g0: Some(2.0),
                lambda: None,
            },
            n_draws: 10_000,
            seed: 1,
            band: 0.05,
            grid: GridConfig::default(),
        }
    }
}

#[derive(Debug)]
pub struct PriorOutput {
    pub curve: Vec<(f64, f64)>,
    pub concentration: Option<ConcentrationCheck>,
}

/// Writes `fusion_curve.csv` (`theta`, `P(delta = 0 | theta)` with `tau2`
/// integrated out), `prior_draws.csv` and, for two or more effects,
/// `concentration.json`. Under an exponential hyperprior the curve uses
/// `G0` at its prior mean.
pub fn cmd_prior(config: PriorConfig, seed: Option<u64>, out: &Path, threads: Option<usize>) -> Result<PriorOutput> {
    let mut cfg = config;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let spec = cfg.covariate.spec()?;
    let hyper = cfg.covariate.hypers()?;
    let curve = fusion_probability_curve(&cfg.grid.values()?, hyper.g0, hyper.g0_prior.initial(), hyper.r);
    let draws = with_threads(threads, |exec| simulate_prior(&spec, &hyper, cfg.n_draws, cfg.seed, exec))??;
    create_dir(out)?;

    let path = out.join("fusion_curve.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["theta", "fusion_probability"])?;
    for (t, p) in &curve {
        w.write_record([t.to_string(), p.to_string()])?;
    }
    w.flush().map_err(|e| FusionError::io(&path, e))?;

    let path = out.join("prior_draws.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut header: Vec<String> = (1..=spec.c()).map(|k| format!("beta_{k}")).collect();
    header.push("tau2".into());
    header.extend(spec.pattern.pairs().iter().map(|(k, j)| format!("delta_{k}{j}")));
    w.write_record(&header)?;
    for i in 0..draws.beta.len() {
        let mut rec: Vec<String> = draws.beta[i].iter().map(|v| v.to_string()).collect();
        rec.push(draws.tau2[i].to_string());
        rec.extend((0..spec.pattern.len()).map(|b| (draws.delta[i] >> b & 1).to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| FusionError::io(&path, e))?;

    let concentration = if spec.c() >= 2 {
        let check = concentration_check(&draws, cfg.band)?;
        let json = serde_json::json!({
            "band": check.band,
            "prior_mass": check.prior_mass,
            "reference_mass": check.reference_mass,
            "passed": check.passed(),
        });
        write_json(&out.join("concentration.json"), &json)?;
        Some(check)
    } else {
        None
    };
    Ok(PriorOutput { curve, concentration })
}
