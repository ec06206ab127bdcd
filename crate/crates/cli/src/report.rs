//! Human-readable status of a batch directory and its analysis outputs.

use crate::analyze::{format_report, AnalysisReport};
use crate::batch::Manifest;
use anyhow::{Context, Result};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub fn report(out_root: &Path) -> Result<String> {
    let manifest: Manifest = serde_json::from_slice(
        &fs::read(out_root.join("manifest.json"))
            .with_context(|| format!("no manifest under {}", out_root.display()))?,
    )?;
    let mut s = String::new();
    s.push_str(&format!(
        "manifest: {} (code {}), master seed {}\n",
        manifest.format, manifest.code_version, manifest.master_seed
    ));
    s.push_str(&format!("note: {}\n", manifest.sweep_interpretation));

    let mut per_cell: BTreeMap<(u64, u32), [u32; 3]> = BTreeMap::new();
    for c in &manifest.cells {
        let slot = per_cell.entry((c.p.to_bits(), c.l)).or_default();
        match c.status.as_str() {
            "done" => slot[0] += 1,
            "unequilibrated" => slot[1] += 1,
            _ => slot[2] += 1,
        }
    }
    s.push_str("cells (done / unequilibrated / failed):\n");
    for ((p_bits, l), counts) in &per_cell {
        s.push_str(&format!(
            "  p = {:<8} L = {:<3} {:>5} / {} / {}\n",
            f64::from_bits(*p_bits),
            l,
            counts[0],
            counts[1],
            counts[2]
        ));
    }

    let analysis_path = out_root.join("analysis").join("analysis.json");
    if let Ok(bytes) = fs::read(&analysis_path) {
        let report: AnalysisReport = serde_json::from_slice(&bytes)?;
        s.push_str("\nanalysis:\n");
        s.push_str(&format_report(&report));
    } else {
        s.push_str("\nno analysis outputs yet (run `tsc analyze <dir>`)\n");
    }
    Ok(s)
}
