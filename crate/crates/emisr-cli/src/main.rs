//! Experiment driver for the emission-map super-resolution library: one
//! subcommand per pipeline stage, configured through an INI-style file
//! whose keys the global flags override.
//!
//! Pipeline order: `synth` → `patchify` → `fit-transform` (optional, the
//! training commands refit on demand) → `perfect-knowledge` (or `train`
//! for one family) → `zero-knowledge` → `transform-sweep` →
//! `injection-sweep` → `report`.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use emisr::harness::{self, CliOverrides, ConfigFile, RunConfig};
use emisr::metrics::MetricReport;

#[derive(Parser, Debug)]
#[command(name = "emisr", about = "Super-resolve gridded emission maps and adapt them across domains")]
struct Cli {
    /// Scenario configuration file (INI-style sections)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; every stage seed derives from it at a fixed offset
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Output directory (results, checkpoints, transforms)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads; the reference pipeline is single-threaded
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Force bit-reproducible execution
    #[arg(long, global = true)]
    deterministic: bool,

    /// Keep all-zero (ocean) patches in training batches
    #[arg(long, global = true)]
    keep_empty: bool,

    /// Drop zeros from quantile-transform fit pools
    #[arg(long, global = true)]
    fit_nonzero_only: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the seeded two-domain dataset (fine, coarse, observed)
    Synth,
    /// Split the generated maps into the four experiment pools
    Patchify,
    /// Fit and store every family's quantile transform
    FitTransform,
    /// Train one network on the configured dataset family
    Train,
    /// Train all four same-domain baselines and tabulate them
    PerfectKnowledge,
    /// Apply the frozen simulated-domain model to observed data as-is
    ZeroKnowledge,
    /// Refit the transform on observed fractions under frozen networks
    TransformSweep,
    /// Fine-tune with varying target-domain injection fractions
    InjectionSweep,
    /// Evaluate an explicit checkpoint/transform/manifest triple
    Eval,
    /// Merge run directories into report.csv and plain-text plot data
    Report {
        /// Run directories to merge; defaults to the configured out_dir
        run_dirs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            // Exit codes are part of the tool contract; clamp for safety.
            ExitCode::from(e.exit_code().clamp(0, 255) as u8)
        }
    }
}

fn run(cli: Cli) -> emisr::Result<()> {
    let file = match &cli.config {
        Some(path) => Some(ConfigFile::parse(path)?),
        None => None,
    };
    let over = CliOverrides {
        seed: cli.seed,
        out: cli.out.clone(),
        threads: cli.threads,
        deterministic: cli.deterministic,
        keep_empty: cli.keep_empty,
        fit_nonzero_only: cli.fit_nonzero_only,
    };
    let cfg = RunConfig::resolve(file.as_ref(), &over)?;

    match cli.command {
        Command::Synth => {
            let ds = harness::cmd_synth(&cfg)?;
            println!(
                "synth: {} simulated frames (fine + coarse), {} observed frames -> {}",
                ds.n_s_frames,
                ds.n_o_frames,
                cfg.data_dir.display()
            );
            for (name, manifest) in [
                ("s_fine", &ds.s_fine),
                ("s_coarse", &ds.s_coarse),
                ("o", &ds.o),
            ] {
                println!("  manifest_{name}.csv: {} patches", manifest.records.len());
            }
        }
        Command::Patchify => {
            let summary = harness::cmd_patchify(&cfg)?;
            println!("patchify: pools written to {}", cfg.data_dir.display());
            for (family, train, val, test) in &summary.rows {
                println!("  {family}: train {train} / val {val} / test {test}");
            }
        }
        Command::FitTransform => {
            let fits = harness::cmd_fit_transform(&cfg)?;
            println!("fit-transform: {} transforms", fits.len());
            for (family, path) in &fits {
                println!("  {family}: {}", path.display());
            }
        }
        Command::Train => {
            let fam = harness::cmd_train(&cfg)?;
            print_trained(&fam);
        }
        Command::PerfectKnowledge => {
            let rows = harness::cmd_perfect_knowledge(&cfg)?;
            for fam in &rows {
                print_trained(fam);
            }
            println!(
                "perfect-knowledge: table written to {}",
                harness::RunPaths::perfect_knowledge(&cfg.out_dir).display()
            );
        }
        Command::ZeroKnowledge => {
            let report = harness::cmd_zero_knowledge(&cfg)?;
            print_metrics("zero-knowledge", &report);
        }
        Command::TransformSweep => {
            let rows = harness::cmd_transform_sweep(&cfg)?;
            println!("transform-sweep: {} rows", rows.len());
            for row in rows.iter().filter(|r| r.subset == "mean") {
                println!(
                    "  {} p={:.2}: NMSE {:.2} dB, SSIM {:.4} ({} patches)",
                    row.checkpoint, row.fraction, row.nmse_db, row.ssim, row.n_patches
                );
            }
            for row in rows.iter().filter(|r| r.status == "skipped") {
                println!("  {} p={:.2}: skipped (empty subset)", row.checkpoint, row.fraction);
            }
        }
        Command::InjectionSweep => {
            let rows = harness::cmd_injection_sweep(&cfg)?;
            println!("injection-sweep: {} fractions", rows.len());
            for row in &rows {
                println!(
                    "  p={:.2}: NMSE {:.2} dB ({:+.2} vs p=0), SSIM {:.4}, {} injected",
                    row.fraction, row.nmse_db, row.delta_nmse_db, row.ssim, row.n_train
                );
            }
        }
        Command::Eval => {
            let report = harness::cmd_eval(&cfg)?;
            print_metrics("eval", &report);
        }
        Command::Report { run_dirs } => {
            let summary = harness::cmd_report(&cfg, &run_dirs)?;
            println!(
                "report: {} rows -> {}",
                summary.n_rows,
                summary.report_path.display()
            );
            for path in &summary.plot_paths {
                println!("  plot data: {}", path.display());
            }
            if summary.hash_mismatch {
                println!("  warning: merged runs have differing config hashes");
            }
        }
    }
    Ok(())
}

fn print_trained(fam: &harness::TrainedFamily) {
    println!(
        "train {} ({}): NMSE {:.2} dB (bicubic {:.2} dB), SSIM {:.4}, \
         {} train / {} test patches, {:.1} s",
        fam.family,
        fam.resolution,
        fam.report.nmse_db,
        fam.baseline_nmse_db,
        fam.report.ssim,
        fam.n_train,
        fam.n_test,
        fam.train_seconds
    );
}

fn print_metrics(label: &str, report: &MetricReport) {
    println!(
        "{label}: {} / transform fitted on {}, domain {}: NMSE {:.2} dB, SSIM {:.4} ({} patches)",
        report.provenance.label(),
        report.transform_fitted_on,
        report.domain.label(),
        report.nmse_db,
        report.ssim,
        report.n_patches
    );
}
