//! Batch execution of (config, sample) cells with resumable, scheduling-
//! independent outputs.
//!
//! Every cell derives its RNG seed from `(master seed, p, L, sample)`, so
//! results do not depend on worker count or execution order. Completed
//! cells live as one JSON file each; re-invocation skips files that already
//! exist and verify. The manifest and per-cell aggregates are rewritten
//! deterministically after every batch, so an interrupted-and-resumed batch
//! ends byte-identical to an uninterrupted one.

use crate::config::RunConfig;
use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};
use tsc_core::engine::{run_sample, RunParams, TemperatureLadder};
use tsc_core::lattice::{build_lattice, Lattice, LatticeSpec};
use tsc_core::model::{compile_interactions, sample_disorder, InteractionTable};
use tsc_core::observables::summarize;
use tsc_core::rng;

pub const SAMPLE_FORMAT: &str = "tsc-sample v1";
pub const MANIFEST_FORMAT: &str = "tsc-manifest v1";

/// Per-rung thermal summary of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RungRow {
    pub t: f64,
    pub e_mean: f64,
    pub e_se: f64,
    pub m2: [f64; 3],
    pub chi0: [f64; 3],
    pub chik: [f64; 3],
}

/// One completed (config, sample) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub format: String,
    pub p: f64,
    pub l: u32,
    pub sample: u32,
    pub seed: String,
    pub eq_sweeps: u64,
    pub total_sweeps: u64,
    pub equilibrated: bool,
    pub measure_interval: u32,
    pub n_records: u64,
    pub sweep_acceptance: f64,
    pub swap_rates: Vec<f64>,
    pub rungs: Vec<RungRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub p: f64,
    pub l: u32,
    pub sample: u32,
    /// done | unequilibrated | failed
    pub status: String,
    pub file: String,
    pub sha256: String,
}

/// Fully determines the reproducibility of every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub code_version: String,
    pub master_seed: u64,
    /// Equilibration sweeps are interpreted as `2^b` with a measurement
    /// phase of equal length on top.
    pub sweep_interpretation: String,
    pub configs: Vec<RunConfig>,
    pub cells: Vec<CellStatus>,
}

pub fn sample_file_name(sample: u32) -> String {
    format!("sample_{sample:05}.json")
}

fn run_one_cell(
    cfg: &RunConfig,
    lat: &Lattice,
    table: &InteractionTable,
    sample: u32,
) -> Result<SampleResult> {
    let seed = rng::sample_seed(cfg.seed, cfg.p, cfg.l, sample);
    let disorder = sample_disorder(lat, cfg.p, seed)?;
    let ladder = TemperatureLadder::geometric(cfg.t_min, cfg.t_max, cfg.n_t)?;
    let params = RunParams {
        b: cfg.b,
        measure_interval: cfg.measure_interval,
        hard_cap_extra: 3,
    };
    let out = run_sample(table, &lat.registry, &disorder, &ladder, params, seed)?;
    let summaries = summarize(&out.series, &out.temps)?;
    Ok(SampleResult {
        format: SAMPLE_FORMAT.to_string(),
        p: cfg.p,
        l: cfg.l,
        sample,
        seed: seed.iter().map(|b| format!("{b:02x}")).collect(),
        eq_sweeps: out.eq_sweeps,
        total_sweeps: out.total_sweeps,
        equilibrated: out.equilibrated,
        measure_interval: cfg.measure_interval,
        n_records: out.series.records[0].len() as u64,
        sweep_acceptance: out.sweep_acceptance,
        swap_rates: out.swap_rates,
        rungs: summaries
            .iter()
            .map(|s| RungRow {
                t: s.t,
                e_mean: s.e_mean,
                e_se: s.e_std_err,
                m2: s.m2,
                chi0: s.chi0,
                chik: s.chik,
            })
            .collect(),
    })
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// A cell result already on disk that matches its expected identity.
fn load_existing(path: &Path, cfg: &RunConfig, sample: u32) -> Option<SampleResult> {
    let bytes = fs::read(path).ok()?;
    let parsed: SampleResult = serde_json::from_slice(&bytes).ok()?;
    let seed = rng::sample_seed(cfg.seed, cfg.p, cfg.l, sample);
    let seed_hex: String = seed.iter().map(|b| format!("{b:02x}")).collect();
    (parsed.format == SAMPLE_FORMAT
        && parsed.p == cfg.p
        && parsed.l == cfg.l
        && parsed.sample == sample
        && parsed.seed == seed_hex)
        .then_some(parsed)
}

/// Execute a batch. `workers = 0` uses one worker per core. Returns the
/// manifest after writing all outputs.
pub fn run_batch(
    configs: &[RunConfig],
    out_root: &Path,
    workers: u32,
    resume: bool,
    quiet: bool,
) -> Result<Manifest> {
    if configs.is_empty() {
        bail!("no run configs");
    }
    for cfg in configs {
        cfg.validate()?;
    }
    let master_seed = configs[0].seed;
    if configs.iter().any(|c| c.seed != master_seed) {
        bail!("all configs of one batch must share the master seed");
    }
    {
        let mut keys: Vec<(u64, u32)> = configs.iter().map(|c| (c.p.to_bits(), c.l)).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            bail!("duplicate (p, L) cell in batch");
        }
    }

    fs::create_dir_all(out_root)?;
    let manifest_path = out_root.join("manifest.json");
    if manifest_path.exists() {
        let existing: Manifest = serde_json::from_slice(&fs::read(&manifest_path)?)
            .context("reading existing manifest")?;
        if !resume {
            bail!(
                "{} already contains a manifest; pass --resume to continue it",
                out_root.display()
            );
        }
        if existing.configs != configs {
            bail!("existing manifest was produced by different configs; refusing to mix");
        }
    }

    // Shared lattices and tables, one per distinct size.
    let mut prepared: BTreeMap<u32, (Lattice, InteractionTable)> = BTreeMap::new();
    for cfg in configs {
        if !prepared.contains_key(&cfg.l) {
            let lat = build_lattice(LatticeSpec::new(cfg.l).map_err(|e| anyhow!("{e}"))?)
                .map_err(|e| anyhow!("{e}"))?;
            let table = compile_interactions(&lat)?;
            prepared.insert(cfg.l, (lat, table));
        }
    }

    // Work list in canonical order.
    let mut work: Vec<(usize, u32)> = Vec::new();
    for (ci, cfg) in configs.iter().enumerate() {
        let dir = out_root.join(cfg.cell_dir());
        fs::create_dir_all(&dir)?;
        // Remove leftovers from interrupted writes.
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "tmp") {
                let _ = fs::remove_file(&path);
            }
        }
        for sample in 0..cfg.n_samples {
            work.push((ci, sample));
        }
    }

    let pending: Vec<(usize, u32)> = work
        .iter()
        .copied()
        .filter(|&(ci, sample)| {
            let cfg = &configs[ci];
            let path = out_root.join(cfg.cell_dir()).join(sample_file_name(sample));
            load_existing(&path, cfg, sample).is_none()
        })
        .collect();
    if !quiet {
        eprintln!(
            "batch: {} cells total, {} pending, {} already complete",
            work.len(),
            pending.len(),
            work.len() - pending.len()
        );
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers as usize)
        .build()
        .context("building worker pool")?;
    let done_counter = AtomicU32::new(0);
    let failures: Vec<String> = pool.install(|| {
        pending
            .par_iter()
            .filter_map(|&(ci, sample)| {
                let cfg = &configs[ci];
                let (lat, table) = &prepared[&cfg.l];
                let path = out_root.join(cfg.cell_dir()).join(sample_file_name(sample));
                let outcome = run_one_cell(cfg, lat, table, sample).and_then(|result| {
                    let mut bytes = serde_json::to_vec_pretty(&result)?;
                    bytes.push(b'\n');
                    atomic_write(&path, &bytes)
                });
                let n = done_counter.fetch_add(1, Ordering::Relaxed) + 1;
                if !quiet && (n % 25 == 0 || n as usize == pending.len()) {
                    eprintln!("batch: {n}/{} cells finished", pending.len());
                }
                match outcome {
                    Ok(()) => None,
                    Err(e) => Some(format!(
                        "p = {}, L = {}, sample {}: {e}",
                        cfg.p, cfg.l, sample
                    )),
                }
            })
            .collect()
    });
    for f in &failures {
        eprintln!("cell failed: {f}");
    }

    // Deterministic reduction: aggregates and manifest are rebuilt from the
    // files in canonical order.
    let mut cells = Vec::with_capacity(work.len());
    for &(ci, sample) in &work {
        let cfg = &configs[ci];
        let rel = format!("{}/{}", cfg.cell_dir(), sample_file_name(sample));
        let path = out_root.join(&rel);
        let status = match load_existing(&path, cfg, sample) {
            Some(result) if result.equilibrated => "done",
            Some(_) => "unequilibrated",
            None => "failed",
        };
        let sha = if path.exists() {
            let mut h = Sha256::new();
            h.update(fs::read(&path)?);
            format!("{:x}", h.finalize())
        } else {
            String::new()
        };
        cells.push(CellStatus {
            p: cfg.p,
            l: cfg.l,
            sample,
            status: status.to_string(),
            file: rel,
            sha256: sha,
        });
    }

    for (ci, cfg) in configs.iter().enumerate() {
        write_aggregate(out_root, cfg, ci, configs)?;
    }

    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed,
        sweep_interpretation:
            "t_eq = 2^b equilibration sweeps (extended until the binning criterion holds), then an equal-length measurement phase".to_string(),
        configs: configs.to_vec(),
        cells,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    atomic_write(&manifest_path, &bytes)?;
    if !failures.is_empty() {
        eprintln!("batch finished with {} failed cells", failures.len());
    }
    Ok(manifest)
}

/// Columnar per-cell aggregate: one row per (sample, temperature).
fn write_aggregate(
    out_root: &Path,
    cfg: &RunConfig,
    _ci: usize,
    _configs: &[RunConfig],
) -> Result<()> {
    let dir = out_root.join(cfg.cell_dir());
    let mut rows = String::new();
    rows.push_str(
        "p,L,T,sample,chi0,chik,e_mean,m2,chi0_A,chi0_B,chi0_C,chik_A,chik_B,chik_C,m2_A,m2_B,m2_C,equilibrated\n",
    );
    let mut any = false;
    for sample in 0..cfg.n_samples {
        let path = dir.join(sample_file_name(sample));
        let Some(result) = load_existing(&path, cfg, sample) else {
            continue;
        };
        any = true;
        for r in &result.rungs {
            let avg3 = |v: &[f64; 3]| (v[0] + v[1] + v[2]) / 3.0;
            rows.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                cfg.p,
                cfg.l,
                r.t,
                sample,
                avg3(&r.chi0),
                avg3(&r.chik),
                r.e_mean,
                avg3(&r.m2),
                r.chi0[0],
                r.chi0[1],
                r.chi0[2],
                r.chik[0],
                r.chik[1],
                r.chik[2],
                r.m2[0],
                r.m2[1],
                r.m2[2],
                result.equilibrated
            ));
        }
    }
    if any {
        atomic_write(&dir.join("aggregate.csv"), rows.as_bytes())?;
    }
    Ok(())
}

/// Load every sample result under an output directory, grouped by cell.
pub fn load_results(out_root: &Path) -> Result<Vec<(RunConfig, Vec<SampleResult>)>> {
    let manifest_path = out_root.join("manifest.json");
    let manifest: Manifest = serde_json::from_slice(
        &fs::read(&manifest_path)
            .with_context(|| format!("no manifest at {}", manifest_path.display()))?,
    )?;
    let mut out = Vec::new();
    for cfg in &manifest.configs {
        let dir = out_root.join(cfg.cell_dir());
        let mut samples = Vec::new();
        for sample in 0..cfg.n_samples {
            if let Some(r) = load_existing(&dir.join(sample_file_name(sample)), cfg, sample) {
                samples.push(r);
            }
        }
        out.push((cfg.clone(), samples));
    }
    Ok(out)
}

