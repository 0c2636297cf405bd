//! Result consolidation: the generic `eval` command, the cross-run
//! `report` merge, and the plot-data text files.
//!
//! `report` understands the result CSVs the other commands write
//! (perfect-knowledge, zero-knowledge, the two sweeps), folds them into
//! one report-shaped CSV, and extracts per-figure plot data as plain
//! `x y series` lines. It is a pure function of its input files, so
//! re-running it reproduces identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport};
use crate::net::Checkpoint;
use crate::transform::QuantileTransform;

use super::commands::{
    report_row, write_file, OutputLock, RunPaths, Scenario, REPORT_HEADER,
};
use super::config::RunConfig;

/// Evaluate an explicit (checkpoint, transform, manifest) triple on one
/// split, named by the `[eval]` config keys.
pub fn cmd_eval(cfg: &RunConfig) -> Result<MetricReport> {
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    cfg.write_echo(&cfg.out_dir)?;
    let require = |value: &Option<PathBuf>, key: &str| -> Result<PathBuf> {
        value
            .clone()
            .ok_or_else(|| Error::Config(format!("eval needs the `eval.{key}` config key")))
    };
    let ckpt_path = require(&cfg.eval_checkpoint, "checkpoint")?;
    let transform_path = require(&cfg.eval_transform, "transform")?;
    let manifest_path = require(&cfg.eval_manifest, "manifest")?;

    let checkpoint = Checkpoint::load(&ckpt_path)?;
    let transform = QuantileTransform::read_csv(&transform_path)?;
    let manifest = DatasetManifest::read_csv(&manifest_path)?;
    let split = match cfg.eval_split.as_str() {
        "train" => Split::Train,
        "val" => Split::Val,
        _ => Split::Test,
    };
    let base_dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let filtered = DatasetManifest {
        records: manifest.records_in(split).cloned().collect(),
        seed: manifest.seed,
        split_policy: manifest.split_policy.clone(),
    };
    let pairs = filtered.load_pairs(&base_dir, crate::grid::PATCH_SIZE)?;
    let report = metrics::evaluate(&checkpoint, &transform, &pairs)?;

    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    out.push_str(&report_row(
        "Eval",
        &report.provenance.label(),
        &report.domain.label(),
        report.n_patches,
        report.nmse_db,
        report.ssim,
        cfg.seed,
        &cfg.config_hash(),
    ));
    out.push('\n');
    write_file(&RunPaths::eval(&cfg.out_dir), &out)?;
    Ok(report)
}

/// What `report` merged and wrote.
#[derive(Debug)]
pub struct ReportSummary {
    pub n_rows: usize,
    pub hash_mismatch: bool,
    pub report_path: PathBuf,
    pub plot_paths: Vec<PathBuf>,
}

/// A parsed result row in report shape plus its source config hash.
struct MergedRow {
    line: String,
    config_hash: String,
}

fn read_csv_rows(path: &Path, expected_fields: usize) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != expected_fields {
            return Err(Error::format(
                path,
                format!(
                    "row {} has {} fields, expected {expected_fields}: `{line}`",
                    i + 1,
                    fields.len()
                ),
            ));
        }
        rows.push(fields);
    }
    Ok(rows)
}

/// Merge the result CSVs of one or more run directories into
/// `report.csv` plus per-figure plot-data files in the output directory.
pub fn cmd_report(cfg: &RunConfig, run_dirs: &[PathBuf]) -> Result<ReportSummary> {
    let dirs: Vec<PathBuf> = if run_dirs.is_empty() {
        vec![cfg.out_dir.clone()]
    } else {
        run_dirs.to_vec()
    };
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    cfg.write_echo(&cfg.out_dir)?;

    let mut rows: Vec<MergedRow> = Vec::new();
    // Plot points: (x, y, series) per figure.
    let mut transform_points: Vec<(f64, f64, String)> = Vec::new();
    let mut injection_points: Vec<(f64, f64, String)> = Vec::new();

    for dir in &dirs {
        let pk = RunPaths::perfect_knowledge(dir);
        if pk.is_file() {
            for f in read_csv_rows(&pk, 11)? {
                let domain = match f[0].as_str() {
                    "o" => "O1",
                    "st" => "ST",
                    _ => "S",
                };
                rows.push(MergedRow {
                    line: format!(
                        "{},{},{domain},{},{},{},{},{}",
                        Scenario::PerfectKnowledge.label(),
                        f[0],
                        f[3],
                        f[4],
                        f[5],
                        f[7],
                        f[8]
                    ),
                    config_hash: f[8].clone(),
                });
            }
        }
        let zk = RunPaths::zero_knowledge(dir);
        if zk.is_file() {
            for f in read_csv_rows(&zk, 8)? {
                rows.push(MergedRow {
                    line: f.join(","),
                    config_hash: f[7].clone(),
                });
            }
        }
        let ts = RunPaths::transform_sweep(dir);
        if ts.is_file() {
            for f in read_csv_rows(&ts, 9)? {
                if f[2] != "mean" || f[3] != "ok" {
                    continue;
                }
                rows.push(MergedRow {
                    line: format!(
                        "{},{} p={},O1,{},{},{},{},{}",
                        Scenario::TransformAdaptation.label(),
                        f[0],
                        f[1],
                        f[4],
                        f[5],
                        f[6],
                        f[7],
                        f[8]
                    ),
                    config_hash: f[8].clone(),
                });
                let x: f64 = f[1]
                    .parse()
                    .map_err(|_| Error::format(&ts, format!("bad fraction `{}`", f[1])))?;
                let y: f64 = f[5]
                    .parse()
                    .map_err(|_| Error::format(&ts, format!("bad nmse_db `{}`", f[5])))?;
                transform_points.push((x, y, f[0].clone()));
            }
        }
        let inj = RunPaths::injection_sweep(dir);
        if inj.is_file() {
            for f in read_csv_rows(&inj, 9)? {
                rows.push(MergedRow {
                    line: format!(
                        "{},p={},O1,{},{},{},{},{}",
                        Scenario::NetworkAdaptation.label(),
                        f[0],
                        f[2],
                        f[3],
                        f[4],
                        f[7],
                        f[8]
                    ),
                    config_hash: f[8].clone(),
                });
                let x: f64 = f[0]
                    .parse()
                    .map_err(|_| Error::format(&inj, format!("bad fraction `{}`", f[0])))?;
                let y: f64 = f[3]
                    .parse()
                    .map_err(|_| Error::format(&inj, format!("bad nmse_db `{}`", f[3])))?;
                injection_points.push((x, y, "injection".to_string()));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "no result CSVs found under {}",
            dirs.iter()
                .map(|d| d.display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }

    let mut hashes: Vec<&str> = rows.iter().map(|r| r.config_hash.as_str()).collect();
    hashes.sort_unstable();
    hashes.dedup();
    let hash_mismatch = hashes.len() > 1;

    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for row in &rows {
        out.push_str(&row.line);
        out.push('\n');
    }
    if hash_mismatch {
        out.push_str(&format!(
            "Warning,config_hash_mismatch,-,0,nan,nan,0,{}\n",
            hashes.join(";")
        ));
    }
    let report_path = RunPaths::report(&cfg.out_dir);
    write_file(&report_path, &out)?;

    let mut plot_paths = Vec::new();
    for (name, points) in [
        ("plot_transform_sweep.txt", &transform_points),
        ("plot_injection_sweep.txt", &injection_points),
    ] {
        if points.is_empty() {
            continue;
        }
        let mut text = String::from("# x y series\n");
        for (x, y, series) in points {
            text.push_str(&format!("{x} {y} {series}\n"));
        }
        let path = cfg.out_dir.join(name);
        write_file(&path, &text)?;
        plot_paths.push(path);
    }

    Ok(ReportSummary {
        n_rows: rows.len(),
        hash_mismatch,
        report_path,
        plot_paths,
    })
}
