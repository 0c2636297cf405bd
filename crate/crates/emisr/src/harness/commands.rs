//! The experiment commands behind the CLI subcommands: dataset
//! generation, pool preparation, the three scenarios, and the two
//! domain-adaptation sweeps.
//!
//! Commands communicate through files with fixed names (see [`RunPaths`]),
//! so each one can run in a separate invocation: `synth` and `patchify`
//! populate the data directory, `perfect-knowledge` trains the per-domain
//! networks whose checkpoints the sweeps reuse, and `report` consolidates
//! whatever result CSVs exist. Every result row carries the run seed and
//! the config hash, and a lock file serializes writers per directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::dataset::{DatasetManifest, Split, SplitPolicy};
use crate::error::{Error, Result};
use crate::grid::{DomainTag, EmissionMap, PatchPair, PATCH_SIZE, SCALE};
use crate::metrics::{self, MetricReport};
use crate::net::{Checkpoint, Provenance, SrNetwork};
use crate::resample;
use crate::synth::{self, SynthDataset, FRAMES_PER_YEAR};
use crate::train::{self, HistoryRow, InjectionConfig, TrainConfig, HISTORY_HEADER};
use crate::transform::{self, QuantileTransform, DEFAULT_SUBSAMPLE_CAP};

use super::config::RunConfig;

/// Experiment scenarios, named as the report rows label them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    PerfectKnowledge,
    ZeroKnowledge,
    TransformAdaptation,
    NetworkAdaptation,
}

impl Scenario {
    pub fn label(self) -> &'static str {
        match self {
            Scenario::PerfectKnowledge => "PerfectKnowledge",
            Scenario::ZeroKnowledge => "ZeroKnowledge",
            Scenario::TransformAdaptation => "TransformAdaptation",
            Scenario::NetworkAdaptation => "NetworkAdaptation",
        }
    }
}

/// Where a scenario's quantile transform comes from: fitted on the source
/// domain, or refitted on a fraction of observed training data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TransformSource {
    SourceFit,
    ObservedFraction(f64),
}

/// Validated description of one scenario run: which experiment, which
/// inputs, which sweep axis. Commands build one of these before touching
/// any data, so scenario guards fire early and in one place.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub transform_source: TransformSource,
    /// Checkpoints the scenario consumes (empty when it trains its own).
    pub checkpoints: Vec<PathBuf>,
    pub sweep_axis: Vec<f64>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.data_dir.is_dir() {
            return Err(Error::Config(format!(
                "data directory {} does not exist; run `synth` first",
                self.data_dir.display()
            )));
        }
        match self.scenario {
            Scenario::TransformAdaptation => {
                for &p in &self.sweep_axis {
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(Error::Config(format!(
                            "transform sweep fractions must lie in (0,1], got {p}"
                        )));
                    }
                }
            }
            Scenario::NetworkAdaptation => {
                for &p in &self.sweep_axis {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(Error::Config(format!(
                            "injection sweep fractions must lie in [0,1], got {p}"
                        )));
                    }
                }
            }
            Scenario::PerfectKnowledge | Scenario::ZeroKnowledge => {
                if !self.sweep_axis.is_empty() {
                    return Err(Error::Config(format!(
                        "{} takes no sweep axis",
                        self.scenario.label()
                    )));
                }
            }
        }
        if self.scenario == Scenario::ZeroKnowledge
            && !matches!(self.transform_source, TransformSource::SourceFit)
        {
            return Err(Error::Config(
                "the zero-knowledge scenario evaluates the source transform; \
                 an observed-fitted transform is not allowed here"
                    .into(),
            ));
        }
        for path in &self.checkpoints {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "checkpoint {} does not exist; run `perfect-knowledge` first",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

/// The dataset families a run works with, in presentation order. The
/// first one is the reference row for training-time percentages.
pub const FAMILIES: [&str; 4] = ["s_fine", "s_coarse", "o", "st"];

/// Fixed file names a run reads and writes.
pub struct RunPaths;

impl RunPaths {
    pub fn synth_manifest(data_dir: &Path, family: &str) -> PathBuf {
        data_dir.join(format!("manifest_{family}.csv"))
    }
    pub fn patches(data_dir: &Path, family: &str) -> PathBuf {
        data_dir.join(format!("patches_{family}.csv"))
    }
    pub fn transform(out_dir: &Path, family: &str) -> PathBuf {
        out_dir.join(format!("transform_{family}.csv"))
    }
    pub fn checkpoint(out_dir: &Path, family: &str) -> PathBuf {
        out_dir.join(format!("ckpt_{family}.srck"))
    }
    pub fn history(out_dir: &Path, family: &str) -> PathBuf {
        out_dir.join(format!("history_{family}.csv"))
    }
    pub fn perfect_knowledge(out_dir: &Path) -> PathBuf {
        out_dir.join("perfect_knowledge.csv")
    }
    pub fn zero_knowledge(out_dir: &Path) -> PathBuf {
        out_dir.join("zero_knowledge.csv")
    }
    pub fn transform_sweep(out_dir: &Path) -> PathBuf {
        out_dir.join("transform_sweep.csv")
    }
    pub fn injection_sweep(out_dir: &Path) -> PathBuf {
        out_dir.join("injection_sweep.csv")
    }
    pub fn report(out_dir: &Path) -> PathBuf {
        out_dir.join("report.csv")
    }
    pub fn eval(out_dir: &Path) -> PathBuf {
        out_dir.join("eval.csv")
    }
}

/// Exclusive write access to a directory, held for the duration of a
/// command. Dropping the guard removes the lock file.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

pub const LOCK_FILE: &str = ".emisr.lock";

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<OutputLock> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(OutputLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Config(format!(
                    "{} is locked by another run ({} exists; remove it if no other \
                     command is active)",
                    dir.display(),
                    path.display()
                )))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Header of report-shaped rows (zero-knowledge, eval, merged report).
pub const REPORT_HEADER: &str = "scenario,variant,domain,n_patches,nmse_db,ssim,seed,config_hash";
/// Header of the Table-shaped perfect-knowledge CSV. The two wall-clock
/// columns sit at the end so determinism checks can mask them.
pub const PK_HEADER: &str = "dataset,resolution,n_train,n_test,nmse_db,ssim,baseline_nmse_db,\
seed,config_hash,time_pct,train_seconds";
pub const TRANSFORM_SWEEP_HEADER: &str =
    "checkpoint,fraction,subset,status,n_patches,nmse_db,ssim,seed,config_hash";
pub const INJECTION_SWEEP_HEADER: &str =
    "fraction,n_train,n_patches,nmse_db,ssim,delta_nmse_db,delta_ssim,seed,config_hash";

pub(crate) fn fmt_db(x: f64) -> String {
    format!("{x:.4}")
}

pub(crate) fn fmt_ssim(x: f64) -> String {
    format!("{x:.6}")
}

pub(crate) fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

/// One report-shaped CSV line.
pub(crate) fn report_row(
    scenario: &str,
    variant: &str,
    domain: &str,
    n_patches: usize,
    nmse_db: f64,
    ssim: f64,
    seed: u64,
    hash: &str,
) -> String {
    format!(
        "{scenario},{variant},{domain},{n_patches},{},{},{seed},{hash}",
        fmt_db(nmse_db),
        fmt_ssim(ssim)
    )
}

/// Generate the dataset into the data directory and echo the config.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthDataset> {
    let _lock = OutputLock::acquire(&cfg.data_dir)?;
    cfg.write_echo(&cfg.data_dir)?;
    synth::gen_dataset(&cfg.field, &cfg.shift, cfg.n_frames, &cfg.data_dir, cfg.seed)
}

/// Patch counts per family and split, as `patchify` reports them.
#[derive(Debug)]
pub struct PatchifySummary {
    pub rows: Vec<(String, usize, usize, usize)>,
}

/// Re-split the generated manifests into the experiment pools: simulated
/// families by calendar year, observed at random, plus the time-limited
/// subset `st` (the fine-grid patches of one year, retagged).
pub fn cmd_patchify(cfg: &RunConfig) -> Result<PatchifySummary> {
    let _lock = OutputLock::acquire(&cfg.data_dir)?;
    cfg.write_echo(&cfg.data_dir)?;
    let read = |family: &str| -> Result<DatasetManifest> {
        let path = RunPaths::synth_manifest(&cfg.data_dir, family);
        if !path.is_file() {
            return Err(Error::Data(format!(
                "{} not found; run `synth` first",
                path.display()
            )));
        }
        DatasetManifest::read_csv(&path)
    };

    let s_fine = read("s_fine")?.split_by_year(
        cfg.train_years,
        cfg.val_year,
        cfg.test_year,
        FRAMES_PER_YEAR,
    )?;
    let s_coarse = read("s_coarse")?.split_by_year(
        cfg.train_years,
        cfg.val_year,
        cfg.test_year,
        FRAMES_PER_YEAR,
    )?;
    let o = read("o")?.split_random(synth::DEFAULT_SPLIT, cfg.seed.wrapping_add(4))?;

    // The time-limited subset: fine-grid patches of one calendar year,
    // retagged so downstream pools and checkpoints carry the ST domain.
    let fine_all = read("s_fine")?;
    let mut st_records: Vec<_> = fine_all
        .records
        .iter()
        .filter(|r| r.time_index / FRAMES_PER_YEAR == cfg.st_year)
        .cloned()
        .collect();
    if st_records.is_empty() {
        return Err(Error::Config(format!(
            "st_year {} selects no frames (dataset has {} frames)",
            cfg.st_year, cfg.n_frames
        )));
    }
    for r in &mut st_records {
        r.domain = DomainTag::SimulatedTimeLimited;
    }
    let st = DatasetManifest {
        records: st_records,
        seed: cfg.seed.wrapping_add(5),
        split_policy: SplitPolicy::RandomFraction {
            train: synth::DEFAULT_SPLIT.0,
            val: synth::DEFAULT_SPLIT.1,
            test: synth::DEFAULT_SPLIT.2,
        },
    }
    .split_random(synth::DEFAULT_SPLIT, cfg.seed.wrapping_add(5))?;

    let mut rows = Vec::new();
    for (family, manifest) in [
        ("s_fine", &s_fine),
        ("s_coarse", &s_coarse),
        ("o", &o),
        ("st", &st),
    ] {
        manifest.write_csv(&RunPaths::patches(&cfg.data_dir, family))?;
        rows.push((
            family.to_string(),
            manifest.count(Split::Train),
            manifest.count(Split::Val),
            manifest.count(Split::Test),
        ));
    }
    Ok(PatchifySummary { rows })
}

/// Load one family's patch manifest, failing with a hint when the
/// pipeline step that writes it has not run.
pub(crate) fn family_manifest(cfg: &RunConfig, family: &str) -> Result<DatasetManifest> {
    let path = RunPaths::patches(&cfg.data_dir, family);
    if !path.is_file() {
        return Err(Error::Data(format!(
            "{} not found; run `patchify` first",
            path.display()
        )));
    }
    DatasetManifest::read_csv(&path)
}

/// Load the HR/LR pairs of one split of a family.
pub(crate) fn split_pairs(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<Vec<PatchPair>> {
    let filtered = DatasetManifest {
        records: manifest.records_in(split).cloned().collect(),
        seed: manifest.seed,
        split_policy: manifest.split_policy.clone(),
    };
    filtered.load_pairs(&cfg.data_dir, PATCH_SIZE)
}

/// Per-patch HR fit-pool values; zeros drop out under `fit_nonzero_only`
/// (heavy mass at 0 otherwise compresses the low quantiles).
fn hr_fit_pool(cfg: &RunConfig, pairs: &[PatchPair]) -> Vec<Vec<f32>> {
    pairs
        .iter()
        .map(|p| {
            if cfg.fit_nonzero_only {
                p.hr.iter().copied().filter(|v| *v != 0.0).collect()
            } else {
                p.hr.clone()
            }
        })
        .collect()
}

/// Fit a family's quantile transform on its training-split values.
fn fit_family_transform(
    cfg: &RunConfig,
    family: &str,
    train_pairs: &[PatchPair],
) -> Result<QuantileTransform> {
    let pool: Vec<f32> = hr_fit_pool(cfg, train_pairs).concat();
    let fitted_on = train_pairs[0].domain;
    let fit_seed = cfg
        .seed
        .wrapping_add(8)
        .wrapping_add(FAMILIES.iter().position(|f| *f == family).unwrap_or(0) as u64);
    QuantileTransform::fit(
        &pool,
        cfg.n_quantiles,
        cfg.target,
        fitted_on,
        fit_seed,
        DEFAULT_SUBSAMPLE_CAP,
    )
}

/// Fit and store the transform of every family; returns (family, path).
pub fn cmd_fit_transform(cfg: &RunConfig) -> Result<Vec<(String, PathBuf)>> {
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    cfg.write_echo(&cfg.out_dir)?;
    let mut out = Vec::new();
    for family in FAMILIES {
        let manifest = family_manifest(cfg, family)?;
        let train_pairs = split_pairs(cfg, &manifest, Split::Train)?;
        if train_pairs.is_empty() {
            return Err(Error::Data(format!("family {family} has no training patches")));
        }
        let transform = fit_family_transform(cfg, family, &train_pairs)?;
        let path = RunPaths::transform(&cfg.out_dir, family);
        transform.write_csv(&path)?;
        out.push((family.to_string(), path));
    }
    Ok(out)
}

/// Everything one same-domain training run produces.
#[derive(Debug)]
pub struct TrainedFamily {
    pub family: String,
    /// "LR→HR" resolution pair of the trained mapping, degrees.
    pub resolution: String,
    pub n_train: usize,
    pub n_test: usize,
    pub report: MetricReport,
    /// Pooled NMSE of bicubic upsampling on the same test split.
    pub baseline_nmse_db: f64,
    pub train_seconds: f64,
    pub checkpoint_path: PathBuf,
}

fn family_provenance(family: &str) -> Provenance {
    match family {
        "st" => Provenance::TrainedOnST,
        "o" => Provenance::TrainedOnO,
        _ => Provenance::TrainedOnS,
    }
}

/// Fit transform → train network → evaluate on the family's own test
/// split, writing the transform, checkpoint, and history files.
fn train_family(cfg: &RunConfig, family: &str, seed_offset: u64) -> Result<TrainedFamily> {
    let manifest = family_manifest(cfg, family)?;
    let train_pairs = split_pairs(cfg, &manifest, Split::Train)?;
    let val_pairs = split_pairs(cfg, &manifest, Split::Val)?;
    let test_pairs = split_pairs(cfg, &manifest, Split::Test)?;
    if train_pairs.is_empty() || val_pairs.is_empty() || test_pairs.is_empty() {
        return Err(Error::Data(format!(
            "family {family} needs non-empty train/val/test splits, got {}/{}/{}",
            train_pairs.len(),
            val_pairs.len(),
            test_pairs.len()
        )));
    }

    let transform = fit_family_transform(cfg, family, &train_pairs)?;
    transform.write_csv(&RunPaths::transform(&cfg.out_dir, family))?;

    let net = SrNetwork::<f32>::init(cfg.net, cfg.net_seed.wrapping_add(seed_offset))?;
    let train_cfg = TrainConfig {
        seed: cfg.train.seed.wrapping_add(seed_offset),
        ..cfg.train.clone()
    };
    let init = Checkpoint::from_network(&net, family_provenance(family), train_cfg.seed, 0);
    let started = Instant::now();
    let (best, history) = train::train(&train_cfg, &train_pairs, &val_pairs, &transform, &init)?;
    let train_seconds = started.elapsed().as_secs_f64();

    let checkpoint_path = RunPaths::checkpoint(&cfg.out_dir, family);
    best.save(&checkpoint_path)?;
    write_history(&RunPaths::history(&cfg.out_dir, family), &history)?;

    let report = metrics::evaluate(&best, &transform, &test_pairs)?;
    let baseline_nmse_db = bicubic_baseline_nmse_db(&test_pairs)?;

    // Resolution pair from the actual data: LR input is SCALE× coarser.
    let sample = EmissionMap::read_emg(&cfg.data_dir.join(&manifest.records[0].file))?;
    let resolution = format!(
        "{:.2}->{:.2}",
        sample.resolution_deg * SCALE as f64,
        sample.resolution_deg
    );

    Ok(TrainedFamily {
        family: family.to_string(),
        resolution,
        n_train: train_pairs.len(),
        n_test: test_pairs.len(),
        report,
        baseline_nmse_db,
        train_seconds,
        checkpoint_path,
    })
}

/// Pooled NMSE of plain bicubic upsampling over a test split.
pub(crate) fn bicubic_baseline_nmse_db(test_pairs: &[PatchPair]) -> Result<f64> {
    let mut refs = Vec::with_capacity(test_pairs.len());
    let mut ests = Vec::with_capacity(test_pairs.len());
    for p in test_pairs {
        let lr = p.lr_size();
        let up = resample::bicubic_upsample(&p.lr, lr, lr, SCALE)?;
        refs.push(p.hr.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>());
        ests.push(up.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>());
    }
    let pairs: Vec<(&[f64], &[f64])> = refs
        .iter()
        .zip(&ests)
        .map(|(r, e)| (r.as_slice(), e.as_slice()))
        .collect();
    metrics::dataset_nmse_db(&pairs)
}

fn write_history(path: &Path, history: &[HistoryRow]) -> Result<()> {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for row in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.epoch, row.train_loss, row.val_nmse_db, row.val_ssim, row.lr
        ));
    }
    write_file(path, &out)
}

/// Train the one family named by `train.dataset`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainedFamily> {
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    cfg.write_echo(&cfg.out_dir)?;
    let family = cfg.train_dataset.clone();
    let seed_offset = FAMILIES.iter().position(|f| *f == family).unwrap_or(0) as u64;
    train_family(cfg, &family, seed_offset)
}

/// Per-family same-domain experiment: each family gets its own transform
/// and network, evaluated on its own test split. Emits the Table-shaped
/// CSV with training time as a percentage of the first row.
pub fn cmd_perfect_knowledge(cfg: &RunConfig) -> Result<Vec<TrainedFamily>> {
    let scenario = ScenarioConfig {
        scenario: Scenario::PerfectKnowledge,
        data_dir: cfg.data_dir.clone(),
        out_dir: cfg.out_dir.clone(),
        transform_source: TransformSource::SourceFit,
        checkpoints: vec![],
        sweep_axis: vec![],
        seed: cfg.seed,
    };
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    scenario.validate()?;
    cfg.write_echo(&cfg.out_dir)?;

    let mut rows = Vec::new();
    for (i, family) in FAMILIES.iter().enumerate() {
        rows.push(train_family(cfg, family, i as u64)?);
    }

    let hash = cfg.config_hash();
    let reference_seconds = rows[0].train_seconds;
    let mut out = String::from(PK_HEADER);
    out.push('\n');
    for row in &rows {
        let time_pct = 100.0 * row.train_seconds / reference_seconds;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{hash},{:.1},{:.3}\n",
            row.family,
            row.resolution,
            row.n_train,
            row.n_test,
            fmt_db(row.report.nmse_db),
            fmt_ssim(row.report.ssim),
            fmt_db(row.baseline_nmse_db),
            cfg.seed,
            time_pct,
            row.train_seconds
        ));
    }
    write_file(&RunPaths::perfect_knowledge(&cfg.out_dir), &out)?;
    Ok(rows)
}

/// Evaluate the source-domain operators untouched on observed test data:
/// fine-grid S checkpoint plus the S-fitted transform.
pub fn cmd_zero_knowledge(cfg: &RunConfig) -> Result<MetricReport> {
    let ckpt_path = RunPaths::checkpoint(&cfg.out_dir, "s_fine");
    let scenario = ScenarioConfig {
        scenario: Scenario::ZeroKnowledge,
        data_dir: cfg.data_dir.clone(),
        out_dir: cfg.out_dir.clone(),
        transform_source: TransformSource::SourceFit,
        checkpoints: vec![ckpt_path.clone()],
        sweep_axis: vec![],
        seed: cfg.seed,
    };
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    scenario.validate()?;
    cfg.write_echo(&cfg.out_dir)?;

    let checkpoint = Checkpoint::load(&ckpt_path)?;
    let transform_path = RunPaths::transform(&cfg.out_dir, "s_fine");
    if !transform_path.is_file() {
        return Err(Error::Data(format!(
            "{} not found; run `fit-transform` or `perfect-knowledge` first",
            transform_path.display()
        )));
    }
    let transform = QuantileTransform::read_csv(&transform_path)?;
    // The scenario's defining guard: no observed-fitted transform here.
    if transform.fitted_on.is_observed() {
        return Err(Error::Config(format!(
            "zero-knowledge scenario requires a source-fitted transform, got one fitted on {}",
            transform.fitted_on.label()
        )));
    }

    let o_manifest = family_manifest(cfg, "o")?;
    let test_pairs = split_pairs(cfg, &o_manifest, Split::Test)?;
    let report = metrics::evaluate(&checkpoint, &transform, &test_pairs)?;

    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    out.push_str(&report_row(
        Scenario::ZeroKnowledge.label(),
        "",
        &report.domain.label(),
        report.n_patches,
        report.nmse_db,
        report.ssim,
        cfg.seed,
        &cfg.config_hash(),
    ));
    out.push('\n');
    write_file(&RunPaths::zero_knowledge(&cfg.out_dir), &out)?;
    Ok(report)
}

/// One row of the transform-adaptation sweep.
#[derive(Clone, Debug)]
pub struct TransformSweepRow {
    pub checkpoint: String,
    pub fraction: f64,
    /// Subset index, "mean" for the per-fraction average, "-" when skipped.
    pub subset: String,
    pub status: &'static str,
    pub n_patches: usize,
    pub nmse_db: f64,
    pub ssim: f64,
}

/// Refit the transform on random fractions of the observed training pool
/// and evaluate the frozen S-trained networks on observed test data: three
/// subsets per fraction plus their mean, for both training resolutions.
pub fn cmd_transform_sweep(cfg: &RunConfig) -> Result<Vec<TransformSweepRow>> {
    let fine = RunPaths::checkpoint(&cfg.out_dir, "s_fine");
    let coarse = RunPaths::checkpoint(&cfg.out_dir, "s_coarse");
    let scenario = ScenarioConfig {
        scenario: Scenario::TransformAdaptation,
        data_dir: cfg.data_dir.clone(),
        out_dir: cfg.out_dir.clone(),
        transform_source: TransformSource::ObservedFraction(1.0),
        checkpoints: vec![fine.clone(), coarse.clone()],
        sweep_axis: cfg.transform_fractions.clone(),
        seed: cfg.seed,
    };
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    scenario.validate()?;
    cfg.write_echo(&cfg.out_dir)?;

    let o_manifest = family_manifest(cfg, "o")?;
    let train_pairs = split_pairs(cfg, &o_manifest, Split::Train)?;
    let test_pairs = split_pairs(cfg, &o_manifest, Split::Test)?;
    if train_pairs.is_empty() || test_pairs.is_empty() {
        return Err(Error::Data("observed pool has empty train or test split".into()));
    }
    let pool_values = hr_fit_pool(cfg, &train_pairs);
    let pool: Vec<&[f32]> = pool_values.iter().map(|v| v.as_slice()).collect();

    let mut rows = Vec::new();
    for (ckpt_name, ckpt_path) in [("fine", &fine), ("coarse", &coarse)] {
        let checkpoint = Checkpoint::load(ckpt_path)?;
        for (i, &p) in cfg.transform_fractions.iter().enumerate() {
            let subset_seed = cfg.seed.wrapping_add(6).wrapping_add(31 * i as u64);
            let fits = match transform::fit_fraction(
                &pool,
                p,
                cfg.n_subsets,
                cfg.n_quantiles,
                cfg.target,
                DomainTag::Observed(synth::OBSERVED_ID),
                subset_seed,
                DEFAULT_SUBSAMPLE_CAP,
            ) {
                Ok(fits) => fits,
                // A fraction that rounds to an empty subset is recorded,
                // not fatal: the sweep continues with the next point.
                Err(Error::Config(_)) => {
                    rows.push(TransformSweepRow {
                        checkpoint: ckpt_name.to_string(),
                        fraction: p,
                        subset: "-".to_string(),
                        status: "skipped",
                        n_patches: 0,
                        nmse_db: f64::NAN,
                        ssim: f64::NAN,
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut nmse_sum = 0.0;
            let mut ssim_sum = 0.0;
            for (s, t_da) in fits.iter().enumerate() {
                let report = metrics::evaluate(&checkpoint, t_da, &test_pairs)?;
                nmse_sum += report.nmse_db;
                ssim_sum += report.ssim;
                rows.push(TransformSweepRow {
                    checkpoint: ckpt_name.to_string(),
                    fraction: p,
                    subset: s.to_string(),
                    status: "ok",
                    n_patches: report.n_patches,
                    nmse_db: report.nmse_db,
                    ssim: report.ssim,
                });
            }
            let n = fits.len() as f64;
            rows.push(TransformSweepRow {
                checkpoint: ckpt_name.to_string(),
                fraction: p,
                subset: "mean".to_string(),
                status: "ok",
                n_patches: test_pairs.len(),
                nmse_db: nmse_sum / n,
                ssim: ssim_sum / n,
            });
        }
    }

    let hash = cfg.config_hash();
    let mut out = String::from(TRANSFORM_SWEEP_HEADER);
    out.push('\n');
    for row in &rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{hash}\n",
            row.checkpoint,
            row.fraction,
            row.subset,
            row.status,
            row.n_patches,
            fmt_db(row.nmse_db),
            fmt_ssim(row.ssim),
            cfg.seed
        ));
    }
    write_file(&RunPaths::transform_sweep(&cfg.out_dir), &out)?;
    Ok(rows)
}

/// One row of the injection sweep.
#[derive(Clone, Debug)]
pub struct InjectionSweepRow {
    pub fraction: f64,
    pub n_train: usize,
    pub n_patches: usize,
    pub nmse_db: f64,
    pub ssim: f64,
    pub delta_nmse_db: f64,
    pub delta_ssim: f64,
}

/// Pick the best observed-fraction from the transform sweep CSV (lowest
/// mean NMSE among fine-checkpoint rows); 1.0 when the sweep has not run.
fn best_transform_fraction(cfg: &RunConfig) -> Result<f64> {
    let path = RunPaths::transform_sweep(&cfg.out_dir);
    if !path.is_file() {
        return Ok(1.0);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut best: Option<(f64, f64)> = None;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::format(&path, format!("malformed sweep row `{line}`")));
        }
        if fields[0] != "fine" || fields[2] != "mean" || fields[3] != "ok" {
            continue;
        }
        let fraction: f64 = fields[1]
            .parse()
            .map_err(|_| Error::format(&path, format!("bad fraction in `{line}`")))?;
        let nmse: f64 = fields[5]
            .parse()
            .map_err(|_| Error::format(&path, format!("bad nmse_db in `{line}`")))?;
        if best.map_or(true, |(_, b)| nmse < b) {
            best = Some((fraction, nmse));
        }
    }
    Ok(best.map(|(p, _)| p).unwrap_or(1.0))
}

/// Fine-tune the time-limited-source checkpoint on equal-budget mixes of
/// source and observed patches, sweeping the injected observed fraction,
/// and evaluate each tuned network on observed test data.
pub fn cmd_injection_sweep(cfg: &RunConfig) -> Result<Vec<InjectionSweepRow>> {
    let base_path = RunPaths::checkpoint(&cfg.out_dir, "st");
    let best_p = best_transform_fraction(cfg)?;
    let scenario = ScenarioConfig {
        scenario: Scenario::NetworkAdaptation,
        data_dir: cfg.data_dir.clone(),
        out_dir: cfg.out_dir.clone(),
        transform_source: TransformSource::ObservedFraction(best_p),
        checkpoints: vec![base_path.clone()],
        sweep_axis: cfg.injection_fractions.clone(),
        seed: cfg.seed,
    };
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    scenario.validate()?;
    cfg.write_echo(&cfg.out_dir)?;

    let base = Checkpoint::load(&base_path)?;
    let st_manifest = family_manifest(cfg, "st")?;
    let o_manifest = family_manifest(cfg, "o")?;
    // Pools hold only signal-bearing patches so every drawn budget is
    // comparable across fractions.
    let source_pool: Vec<PatchPair> = split_pairs(cfg, &st_manifest, Split::Train)?
        .into_iter()
        .filter(|p| !p.empty)
        .collect();
    let target_pool: Vec<PatchPair> = split_pairs(cfg, &o_manifest, Split::Train)?
        .into_iter()
        .filter(|p| !p.empty)
        .collect();
    let val_pairs = split_pairs(cfg, &o_manifest, Split::Val)?;
    let test_pairs = split_pairs(cfg, &o_manifest, Split::Test)?;

    let budget = if cfg.injection_budget > 0 {
        cfg.injection_budget
    } else {
        source_pool.len().min(target_pool.len())
    };
    if budget == 0 {
        return Err(Error::Data("injection pools have no non-empty patches".into()));
    }

    // T_DA at the sweep's best fraction, refit once on the observed pool.
    let pool_values = hr_fit_pool(cfg, &target_pool);
    let pool_slices: Vec<&[f32]> = pool_values.iter().map(|v| v.as_slice()).collect();
    let t_da = transform::fit_fraction(
        &pool_slices,
        best_p,
        1,
        cfg.n_quantiles,
        cfg.target,
        DomainTag::Observed(synth::OBSERVED_ID),
        cfg.seed.wrapping_add(9),
        DEFAULT_SUBSAMPLE_CAP,
    )?
    .remove(0);

    let mut rows = Vec::new();
    for (i, &p) in cfg.injection_fractions.iter().enumerate() {
        let injection = train::build_injection_set(&InjectionConfig {
            fraction: p,
            total_budget: budget,
            source_pool: &source_pool,
            target_pool: &target_pool,
            seed: cfg.seed.wrapping_add(7).wrapping_add(17 * i as u64),
        })?;
        let ft_cfg = TrainConfig {
            epochs: cfg.fine_tune_epochs,
            seed: cfg.train.seed.wrapping_add(100).wrapping_add(i as u64),
            ..cfg.train.clone()
        };
        let (tuned, _history) = train::fine_tune(&ft_cfg, &base, &injection, &val_pairs, &t_da, p)?;
        let report = metrics::evaluate(&tuned, &t_da, &test_pairs)?;
        rows.push(InjectionSweepRow {
            fraction: p,
            n_train: injection.len(),
            n_patches: report.n_patches,
            nmse_db: report.nmse_db,
            ssim: report.ssim,
            delta_nmse_db: 0.0,
            delta_ssim: 0.0,
        });
    }

    // Deltas against the no-injection row (fraction 0 when present,
    // otherwise the first row of the axis).
    let reference = rows
        .iter()
        .find(|r| r.fraction == 0.0)
        .unwrap_or(&rows[0])
        .clone();
    for row in &mut rows {
        row.delta_nmse_db = row.nmse_db - reference.nmse_db;
        row.delta_ssim = row.ssim - reference.ssim;
    }

    let hash = cfg.config_hash();
    let mut out = String::from(INJECTION_SWEEP_HEADER);
    out.push('\n');
    for row in &rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{hash}\n",
            row.fraction,
            row.n_train,
            row.n_patches,
            fmt_db(row.nmse_db),
            fmt_ssim(row.ssim),
            fmt_db(row.delta_nmse_db),
            fmt_ssim(row.delta_ssim),
            cfg.seed
        ));
    }
    write_file(&RunPaths::injection_sweep(&cfg.out_dir), &out)?;
    Ok(rows)
}
