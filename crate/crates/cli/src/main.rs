//! Command-line driver: lattice generation, batch simulation, analysis and
//! reporting.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::fs;
use std::path::PathBuf;
use tsc_cli::{analyze, batch, config, preset, report};
use tsc_core::lattice::{build_lattice, canonical_text, LatticeSpec};

#[derive(Parser)]
#[command(
    name = "tsc",
    about = "Monte Carlo threshold estimation for topological subsystem color codes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the gauge lattice for a given size and emit its canonical
    /// serialization.
    GenerateLattice {
        /// Linear system size (multiple of 3, at least 3).
        #[arg(long)]
        l: u32,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a batch of (p, L, sample) cells from a config file or preset.
    Run {
        /// Flat key-value config file.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Built-in preset name (see `tsc preset list`).
        #[arg(long)]
        preset: Option<String>,
        /// Worker count; 0 means one per core.
        #[arg(long, default_value_t = 0)]
        workers: u32,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue an interrupted batch in the same directory.
        #[arg(long)]
        resume: bool,
    },
    /// Aggregate a batch directory into crossings, boundary, threshold and
    /// figures.
    Analyze {
        /// Batch output directory (the one holding manifest.json).
        dir: PathBuf,
        /// Report directory; defaults to `<dir>/analysis`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Bootstrap resamplings.
        #[arg(long, default_value_t = 500)]
        bootstrap: u32,
    },
    /// List or show built-in presets.
    Preset {
        #[command(subcommand)]
        which: PresetCmd,
    },
    /// Summarize a batch directory and any analysis outputs.
    Report { dir: PathBuf },
}

#[derive(Subcommand)]
enum PresetCmd {
    List,
    Show { name: String },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenerateLattice { l, out } => {
            let spec = LatticeSpec::new(l).map_err(|e| anyhow::anyhow!("{e}"))?;
            let lat = build_lattice(spec).map_err(|e| anyhow::anyhow!("{e}"))?;
            let text = canonical_text(&lat);
            match out {
                Some(path) => {
                    fs::write(&path, text)
                        .with_context(|| format!("writing {}", path.display()))?;
                    eprintln!(
                        "wrote L = {l}: {} qubits, {} generators, {} spins",
                        lat.n_qubits(),
                        lat.generators.len(),
                        lat.registry.total_spins()
                    );
                }
                None => print!("{text}"),
            }
        }
        Command::Run {
            config,
            preset,
            workers,
            seed,
            out,
            resume,
        } => {
            let mut configs = match (&config, &preset) {
                (Some(path), None) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    config::parse_config(&text)?
                }
                (None, Some(name)) => preset::preset(
                    name,
                    seed.unwrap_or(1),
                    out.as_deref()
                        .map(|p| p.to_string_lossy().into_owned())
                        .as_deref()
                        .unwrap_or("runs/preset"),
                )?,
                _ => bail!("pass exactly one of --config or --preset"),
            };
            if let Some(s) = seed {
                for c in configs.iter_mut() {
                    c.seed = s;
                }
            }
            if let Some(dir) = &out {
                for c in configs.iter_mut() {
                    c.out_dir = dir.to_string_lossy().into_owned();
                }
            }
            let out_root = PathBuf::from(&configs[0].out_dir);
            let effective_workers = if workers > 0 {
                workers
            } else {
                configs[0].workers
            };
            let manifest =
                batch::run_batch(&configs, &out_root, effective_workers, resume, false)?;
            let done = manifest
                .cells
                .iter()
                .filter(|c| c.status == "done")
                .count();
            let uneq = manifest
                .cells
                .iter()
                .filter(|c| c.status == "unequilibrated")
                .count();
            println!(
                "batch complete: {done} done, {uneq} unequilibrated, {} failed; outputs in {}",
                manifest.cells.len() - done - uneq,
                out_root.display()
            );
        }
        Command::Analyze {
            dir,
            out,
            bootstrap,
        } => {
            let report_dir = out.unwrap_or_else(|| dir.join("analysis"));
            let opts = analyze::AnalyzeOptions {
                n_resample: bootstrap,
                ..Default::default()
            };
            let report = analyze::analyze(&dir, &report_dir, &opts)?;
            print!("{}", analyze::format_report(&report));
            println!("reports written to {}", report_dir.display());
        }
        Command::Preset { which } => match which {
            PresetCmd::List => {
                for name in preset::PRESET_NAMES {
                    println!("{name}: {}", preset::preset_description(name));
                }
            }
            PresetCmd::Show { name } => {
                let configs = preset::preset(&name, 1, "runs/preset")?;
                println!("{}", preset::preset_description(&name));
                println!(
                    "{:<8} {:>4} {:>9} {:>3} {:>6} {:>6} {:>4} {:>14} {:>12}",
                    "p", "L", "samples", "b", "Tmin", "Tmax", "N_T", "est. sweeps", "vs table"
                );
                for c in &configs {
                    let ratio = preset::table_counterpart(c)
                        .map(|t| {
                            format!(
                                "{:.5}%",
                                100.0 * c.estimated_sweeps() as f64 / t.estimated_sweeps() as f64
                            )
                        })
                        .unwrap_or_default();
                    println!(
                        "{:<8} {:>4} {:>9} {:>3} {:>6} {:>6} {:>4} {:>14} {:>12}",
                        c.p,
                        c.l,
                        c.n_samples,
                        c.b,
                        c.t_min,
                        c.t_max,
                        c.n_t,
                        c.estimated_sweeps(),
                        ratio
                    );
                }
            }
        },
        Command::Report { dir } => {
            print!("{}", report::report(&dir)?);
        }
    }
    Ok(())
}
