//! End-to-end analysis of a completed (or partial) batch directory:
//! disorder ensembles, crossing estimates per disorder rate, phase
//! boundary, threshold against the Nishimori line, per-sublattice
//! sensitivity, and SVG figures.

use crate::batch::{load_results, SampleResult};
use crate::config::RunConfig;
use crate::svg::{Plot, PALETTE};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use tsc_core::analysis::{
    build_phase_boundary, find_crossing_from_ensembles, intersect_nishimori, scaling_collapse,
    xi_over_l_curve, AnalysisError, CrossingEstimate, DisorderEnsemble, XiCurve,
};
use tsc_core::model::nishimori_temperature;
use tsc_core::rng::derive_seed;

/// Which sublattice susceptibilities feed the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorMode {
    Averaged,
    Single(usize),
}

impl ColorMode {
    fn pick(&self, v: &[f64; 3]) -> f64 {
        match self {
            ColorMode::Averaged => (v[0] + v[1] + v[2]) / 3.0,
            ColorMode::Single(c) => v[*c],
        }
    }

    fn name(&self) -> String {
        match self {
            ColorMode::Averaged => "averaged".to_string(),
            ColorMode::Single(c) => format!("sublattice-{}", ["A", "B", "C"][*c]),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossingReport {
    pub p: f64,
    pub sizes: Vec<u32>,
    pub status: String,
    pub t_c: Option<f64>,
    pub sigma_tc: Option<f64>,
    pub crossing_fraction: f64,
    pub largest_pair: Option<String>,
    pub nu: Option<f64>,
    pub excluded_samples: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub p_c: f64,
    pub sigma_pc: f64,
    pub bracket: (f64, f64),
    pub bracket_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityEntry {
    pub p: f64,
    pub mode: String,
    pub t_c: Option<f64>,
    pub sigma_tc: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// Largest deviation between a per-sublattice estimate and the averaged
    /// one, in units of their combined bootstrap error.
    pub max_deviation_sigma: Option<f64>,
    pub consistent: Option<bool>,
    pub entries: Vec<SensitivityEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub format: String,
    pub bootstrap_resamples: u32,
    pub crossings: Vec<CrossingReport>,
    pub threshold: Option<ThresholdReport>,
    pub threshold_note: Option<String>,
    pub sensitivity: SensitivityReport,
    /// Disorder rates that could not be analyzed and why.
    pub gaps: Vec<String>,
}

pub struct AnalyzeOptions {
    pub n_resample: u32,
    pub seed: u64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            n_resample: 500,
            seed: 0x7e3d,
        }
    }
}

fn ensemble_from_samples(
    cfg: &RunConfig,
    samples: &[SampleResult],
    mode: ColorMode,
) -> (DisorderEnsemble, u32) {
    let temps: Vec<f64> = samples
        .first()
        .map(|s| s.rungs.iter().map(|r| r.t).collect())
        .unwrap_or_default();
    let mut chi0 = vec![Vec::new(); temps.len()];
    let mut chik = vec![Vec::new(); temps.len()];
    let mut excluded = 0u32;
    for s in samples {
        if !s.equilibrated {
            excluded += 1;
            continue;
        }
        for (t, r) in s.rungs.iter().enumerate() {
            chi0[t].push(mode.pick(&r.chi0));
            chik[t].push(mode.pick(&r.chik));
        }
    }
    (
        DisorderEnsemble {
            p: cfg.p,
            l: cfg.l,
            temps,
            chi0,
            chik,
            excluded,
        },
        excluded,
    )
}

fn crossing_for_mode(
    cells: &[(RunConfig, Vec<SampleResult>)],
    mode: ColorMode,
    opts: &AnalyzeOptions,
) -> Result<(CrossingEstimate, Vec<XiCurve>, u32), AnalysisError> {
    let mut ensembles = Vec::new();
    let mut excluded_total = 0;
    for (cfg, samples) in cells {
        let (ens, excluded) = ensemble_from_samples(cfg, samples, mode);
        excluded_total += excluded;
        ensembles.push(ens);
    }
    let p_bits = ensembles[0].p.to_bits();
    let mode_tag = match mode {
        ColorMode::Averaged => 3u64,
        ColorMode::Single(c) => c as u64,
    };
    let curves: Vec<XiCurve> = ensembles
        .iter()
        .map(|ens| {
            xi_over_l_curve(
                ens,
                opts.n_resample,
                derive_seed("analyze-curve", opts.seed, &[p_bits, ens.l as u64, mode_tag]),
            )
        })
        .collect::<Result<_, _>>()?;
    let est = find_crossing_from_ensembles(
        &ensembles,
        opts.n_resample,
        derive_seed("analyze-cross", opts.seed, &[p_bits, mode_tag]),
    )?;
    Ok((est, curves, excluded_total))
}

/// Analyze a batch output directory; writes reports and figures into
/// `report_dir` and returns the in-memory report.
pub fn analyze(out_root: &Path, report_dir: &Path, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    let results = load_results(out_root)?;
    fs::create_dir_all(report_dir)?;

    // Group cells by disorder rate.
    let mut by_p: BTreeMap<u64, Vec<(RunConfig, Vec<SampleResult>)>> = BTreeMap::new();
    for (cfg, samples) in results {
        by_p.entry(cfg.p.to_bits()).or_default().push((cfg, samples));
    }

    let mut crossings = Vec::new();
    let mut estimates = Vec::new();
    let mut sensitivity_entries = Vec::new();
    let mut gaps = Vec::new();

    for cells in by_p.values_mut() {
        cells.sort_by_key(|(cfg, _)| cfg.l);
        let p = cells[0].0.p;
        let sizes: Vec<u32> = cells.iter().map(|(c, _)| c.l).collect();
        if cells.len() < 2 {
            gaps.push(format!(
                "p = {p}: only {} size(s) present ({sizes:?}); need at least 2 for a crossing",
                cells.len()
            ));
            continue;
        }
        let usable: Vec<usize> = cells
            .iter()
            .enumerate()
            .filter(|(_, (_, samples))| samples.iter().filter(|s| s.equilibrated).count() >= 2)
            .map(|(i, _)| i)
            .collect();
        if usable.len() < 2 {
            gaps.push(format!(
                "p = {p}: fewer than 2 sizes with at least 2 equilibrated samples"
            ));
            continue;
        }
        let cells: Vec<(RunConfig, Vec<SampleResult>)> =
            usable.iter().map(|&i| cells[i].clone()).collect();

        match crossing_for_mode(&cells, ColorMode::Averaged, opts) {
            Ok((mut est, curves, excluded)) => {
                if curves.len() >= 3 {
                    if let (Ok(col), false) = (
                        scaling_collapse(&curves, est.t_c),
                        est.t_c.is_nan(),
                    ) {
                        if !col.degenerate {
                            est.nu = Some(col.nu);
                        }
                    }
                }
                plot_crossing(report_dir, p, &curves, &est)?;
                crossings.push(CrossingReport {
                    p,
                    sizes,
                    status: format!("{:?}", est.status),
                    t_c: (!est.t_c.is_nan()).then_some(est.t_c),
                    sigma_tc: (!est.t_c.is_nan()).then_some(est.sigma_tc),
                    crossing_fraction: est.crossing_fraction,
                    largest_pair: est
                        .largest_pair
                        .map(|pc| format!("L{}/L{} at T = {:.4}", pc.l_low, pc.l_high, pc.t_c)),
                    nu: est.nu,
                    excluded_samples: excluded,
                });
                // Per-sublattice sensitivity alongside the averaged result.
                sensitivity_entries.push(SensitivityEntry {
                    p,
                    mode: ColorMode::Averaged.name(),
                    t_c: (!est.t_c.is_nan()).then_some(est.t_c),
                    sigma_tc: (!est.t_c.is_nan()).then_some(est.sigma_tc),
                });
                for c in 0..3 {
                    if let Ok((single, _, _)) =
                        crossing_for_mode(&cells, ColorMode::Single(c), opts)
                    {
                        sensitivity_entries.push(SensitivityEntry {
                            p,
                            mode: ColorMode::Single(c).name(),
                            t_c: (!single.t_c.is_nan()).then_some(single.t_c),
                            sigma_tc: (!single.t_c.is_nan()).then_some(single.sigma_tc),
                        });
                    }
                }
                estimates.push(est);
            }
            Err(e) => gaps.push(format!("p = {p}: {e}")),
        }
    }

    // Boundary and threshold.
    let mut threshold = None;
    let mut threshold_note = None;
    let boundary = build_phase_boundary(&estimates).ok();
    if let Some(boundary) = &boundary {
        write_boundary_csv(report_dir, boundary)?;
        match intersect_nishimori(
            boundary,
            opts.n_resample,
            derive_seed("analyze-threshold", opts.seed, &[]),
        ) {
            Ok(est) => {
                threshold = Some(ThresholdReport {
                    p_c: est.p_c,
                    sigma_pc: est.sigma_pc,
                    bracket: est.bracket,
                    bracket_fraction: est.bracket_fraction,
                });
            }
            Err(e) => threshold_note = Some(e.to_string()),
        }
        plot_phase_diagram(report_dir, boundary, threshold.as_ref())?;
    } else {
        threshold_note = Some("no crossings available to build a boundary".to_string());
    }

    // Sensitivity verdict: compare per-sublattice estimates to the averaged
    // one at each p where both exist.
    let mut max_dev: Option<f64> = None;
    for p_entries in sensitivity_entries.chunk_by(|a, b| a.p == b.p) {
        let Some(avg) = p_entries.iter().find(|e| e.mode == "averaged") else {
            continue;
        };
        let (Some(t_avg), Some(s_avg)) = (avg.t_c, avg.sigma_tc) else {
            continue;
        };
        for e in p_entries.iter().filter(|e| e.mode != "averaged") {
            if let (Some(t), Some(s)) = (e.t_c, e.sigma_tc) {
                let combined = s.hypot(s_avg).max(1e-12);
                let dev = (t - t_avg).abs() / combined;
                max_dev = Some(max_dev.map_or(dev, |m: f64| m.max(dev)));
            }
        }
    }
    let sensitivity = SensitivityReport {
        max_deviation_sigma: max_dev,
        consistent: max_dev.map(|d| d < 1.0),
        entries: sensitivity_entries,
    };

    let report = AnalysisReport {
        format: "tsc-analysis v1".to_string(),
        bootstrap_resamples: opts.n_resample,
        crossings,
        threshold,
        threshold_note,
        sensitivity,
        gaps,
    };

    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    fs::write(report_dir.join("analysis.json"), &bytes)?;
    let mut sens = serde_json::to_vec_pretty(&report.sensitivity)?;
    sens.push(b'\n');
    fs::write(report_dir.join("sensitivity.json"), &sens)?;
    if let Some(t) = &report.threshold {
        let mut tb = serde_json::to_vec_pretty(t)?;
        tb.push(b'\n');
        fs::write(report_dir.join("threshold.json"), &tb)?;
    }
    Ok(report)
}

fn write_boundary_csv(report_dir: &Path, boundary: &tsc_core::analysis::PhaseBoundary) -> Result<()> {
    let mut csv = String::from("p,t_c,sigma_tc\n");
    for (p, t, s) in &boundary.knots {
        csv.push_str(&format!("{p},{t},{s}\n"));
    }
    fs::write(report_dir.join("boundary.csv"), csv).context("writing boundary.csv")
}

fn plot_crossing(
    report_dir: &Path,
    p: f64,
    curves: &[XiCurve],
    est: &CrossingEstimate,
) -> Result<()> {
    let mut plot = Plot::new(
        &format!("Correlation-length ratio, p = {p}"),
        "T",
        "xi_L / L",
    );
    for c in curves {
        for i in 0..c.temps.len() {
            plot.include(c.temps[i], c.values[i] + c.sigmas[i]);
            plot.include(c.temps[i], (c.values[i] - c.sigmas[i]).max(0.0));
        }
    }
    plot.pad();
    if !est.t_c.is_nan() {
        plot.vband(est.t_c - est.sigma_tc, est.t_c + est.sigma_tc, "#d62728");
    }
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let line: Vec<(f64, f64)> = c.temps.iter().copied().zip(c.values.iter().copied()).collect();
        plot.polyline(&line, color, Some(&format!("L = {}", c.l)));
        let pts: Vec<(f64, f64, f64)> = (0..c.temps.len())
            .map(|i| (c.temps[i], c.values[i], c.sigmas[i]))
            .collect();
        plot.points_with_errors(&pts, color, None);
    }
    fs::write(
        report_dir.join(format!("crossing_p{p:.6}.svg")),
        plot.render(),
    )?;
    Ok(())
}

fn plot_phase_diagram(
    report_dir: &Path,
    boundary: &tsc_core::analysis::PhaseBoundary,
    threshold: Option<&ThresholdReport>,
) -> Result<()> {
    let mut plot = Plot::new("Phase diagram", "p", "T");
    let p_hi = boundary.p_max().max(0.08);
    plot.include(0.0, 0.0);
    for &(p, t, s) in &boundary.knots {
        plot.include(p, t + s);
    }
    // Nishimori line over the plotted range.
    let nish: Vec<(f64, f64)> = (1..=120)
        .map(|i| {
            let p = p_hi * i as f64 / 120.0;
            (p, nishimori_temperature(p).unwrap_or(0.0))
        })
        .collect();
    for &(p, t) in &nish {
        plot.include(p, t);
    }
    plot.pad();
    if let Some(t) = threshold {
        plot.vband(t.p_c - t.sigma_pc, t.p_c + t.sigma_pc, "#d62728");
    }
    plot.polyline(&nish, PALETTE[0], Some("Nishimori line"));
    let knots: Vec<(f64, f64)> = boundary.knots.iter().map(|&(p, t, _)| (p, t)).collect();
    plot.polyline(&knots, PALETTE[1], Some("T_c(p)"));
    let pts: Vec<(f64, f64, f64)> = boundary.knots.iter().map(|&(p, t, s)| (p, t, s)).collect();
    plot.points_with_errors(&pts, PALETTE[1], None);
    fs::write(report_dir.join("phase_diagram.svg"), plot.render())?;
    Ok(())
}

/// Text summary used by both `analyze` and `report`.
pub fn format_report(report: &AnalysisReport) -> String {
    let mut s = String::new();
    s.push_str("Crossing estimates\n");
    for c in &report.crossings {
        match (c.t_c, c.sigma_tc) {
            (Some(t), Some(sig)) => s.push_str(&format!(
                "  p = {:<8} sizes {:?}: T_c = {:.4} +- {:.4}  [{}; crossing fraction {:.2}{}{}]\n",
                c.p,
                c.sizes,
                t,
                sig,
                c.status,
                c.crossing_fraction,
                c.nu.map(|n| format!("; nu = {n:.2}")).unwrap_or_default(),
                if c.excluded_samples > 0 {
                    format!("; {} unequilibrated samples excluded", c.excluded_samples)
                } else {
                    String::new()
                },
            )),
            _ => s.push_str(&format!(
                "  p = {:<8} sizes {:?}: no crossing in the simulated window (fraction {:.2})\n",
                c.p, c.sizes, c.crossing_fraction
            )),
        }
    }
    match (&report.threshold, &report.threshold_note) {
        (Some(t), _) => s.push_str(&format!(
            "Threshold: p_c = {:.4} +- {:.4} (bracket [{:.4}, {:.4}], fraction {:.2})\n",
            t.p_c, t.sigma_pc, t.bracket.0, t.bracket.1, t.bracket_fraction
        )),
        (None, Some(note)) => s.push_str(&format!("Threshold: not determined ({note})\n")),
        (None, None) => s.push_str("Threshold: not determined\n"),
    }
    match (
        report.sensitivity.max_deviation_sigma,
        report.sensitivity.consistent,
    ) {
        (Some(dev), Some(ok)) => s.push_str(&format!(
            "Sensitivity: per-sublattice vs averaged crossings deviate by at most {dev:.2} combined sigma ({})\n",
            if ok { "consistent" } else { "inconsistent" }
        )),
        _ => s.push_str("Sensitivity: not enough data for the per-sublattice comparison\n"),
    }
    for g in &report.gaps {
        s.push_str(&format!("gap: {g}\n"));
    }
    s
}
