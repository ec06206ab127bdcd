//! Built-in run presets.
//!
//! The three `table1-*` presets reproduce the production simulation
//! parameters row by row (sample counts, equilibration exponents,
//! temperature windows and rung counts per size band); the disorder grids
//! cover each band including the featured rates 0.048 and 0.055. The
//! `desk-scale` preset shrinks sample counts and equilibration exponents by
//! orders of magnitude so the full pipeline runs on a laptop; its estimated
//! sweep count stays below 1% of the corresponding production rows.

use crate::config::RunConfig;
use anyhow::{bail, Result};

pub const PRESET_NAMES: [&str; 4] = [
    "table1-low-p",
    "table1-mid-p",
    "table1-high-p",
    "desk-scale",
];

pub fn preset_description(name: &str) -> &'static str {
    match name {
        "table1-low-p" => "production band p in 0.000..0.020: L 9/12 (3200 samples, b 17), 18 (1600, b 18), 24 (400, b 19); T in [1.40, 2.50]",
        "table1-mid-p" => "production band p in 0.030..0.040: L 9/12 (4800 samples, b 18), 18 (2400, b 19), 24 (800, b 20); T in [1.25, 2.40]",
        "table1-high-p" => "production band p in 0.045..0.060: L 9/12 (9600 samples, b 19), 18 (4800, b 21), 24 (2400, b 24); T in [0.9, 2.20]",
        "desk-scale" => "laptop-runtime reduction (< 1% of the production sweep budget): narrow temperature windows around the transition, b = 12, hundreds of samples; intended for validation, not production statistics",
        _ => "",
    }
}

struct Band {
    ps: &'static [f64],
    t_min: f64,
    t_max: f64,
    /// (L, n_samples, b, n_t)
    rows: &'static [(u32, u32, u32, u32)],
}

fn expand(band: &Band, seed: u64, out_dir: &str) -> Vec<RunConfig> {
    let mut out = Vec::new();
    for &p in band.ps {
        for &(l, n_samples, b, n_t) in band.rows {
            out.push(RunConfig {
                p,
                l,
                n_samples,
                b,
                t_min: band.t_min,
                t_max: band.t_max,
                n_t,
                seed,
                measure_interval: 4,
                workers: 0,
                out_dir: out_dir.to_string(),
            });
        }
    }
    out
}

/// Expand a preset into run configs.
pub fn preset(name: &str, seed: u64, out_dir: &str) -> Result<Vec<RunConfig>> {
    let configs = match name {
        "table1-low-p" => expand(
            &Band {
                ps: &[0.000, 0.010, 0.020],
                t_min: 1.40,
                t_max: 2.50,
                rows: &[(9, 3200, 17, 24), (12, 3200, 17, 24), (18, 1600, 18, 24), (24, 400, 19, 28)],
            },
            seed,
            out_dir,
        ),
        "table1-mid-p" => expand(
            &Band {
                ps: &[0.030, 0.035, 0.040],
                t_min: 1.25,
                t_max: 2.40,
                rows: &[(9, 4800, 18, 28), (12, 4800, 18, 28), (18, 2400, 19, 28), (24, 800, 20, 32)],
            },
            seed,
            out_dir,
        ),
        "table1-high-p" => expand(
            &Band {
                ps: &[0.045, 0.048, 0.050, 0.055, 0.060],
                t_min: 0.9,
                t_max: 2.20,
                rows: &[(9, 9600, 19, 32), (12, 9600, 19, 32), (18, 4800, 21, 36), (24, 2400, 24, 48)],
            },
            seed,
            out_dir,
        ),
        "desk-scale" => desk_scale(seed, out_dir),
        other => bail!("unknown preset {other:?}; available: {PRESET_NAMES:?}"),
    };
    Ok(configs)
}

fn desk_scale(seed: u64, out_dir: &str) -> Vec<RunConfig> {
    let mut out = Vec::new();
    // Pure system: one disorder realization exists, so samples are
    // independent thermal repetitions used for error bars. Larger sizes
    // need a longer base equilibration phase to order from a hot start.
    for (l, b) in [(9u32, 12u32), (12, 13), (18, 13)] {
        out.push(RunConfig {
            p: 0.0,
            l,
            n_samples: 6,
            b,
            t_min: 1.50,
            t_max: 1.85,
            n_t: 14,
            seed,
            measure_interval: 4,
            workers: 0,
            out_dir: out_dir.to_string(),
        });
    }
    // Disordered cells around the featured rates; windows bracket the
    // expected crossings.
    for (p, n_samples, t_min, t_max) in [
        (0.048, 200, 1.10, 1.45),
        (0.055, 150, 0.95, 1.30),
        (0.060, 150, 0.95, 1.30),
    ] {
        for l in [9u32, 12] {
            out.push(RunConfig {
                p,
                l,
                n_samples,
                b: 12,
                t_min,
                t_max,
                n_t: 14,
                seed,
                measure_interval: 4,
                workers: 0,
                out_dir: out_dir.to_string(),
            });
        }
    }
    out
}

/// The production band a desk-scale config corresponds to, for the sweep
/// budget comparison.
pub fn table_counterpart(cfg: &RunConfig) -> Option<RunConfig> {
    let band = if cfg.p <= 0.020 {
        "table1-low-p"
    } else if cfg.p <= 0.040 {
        "table1-mid-p"
    } else {
        "table1-high-p"
    };
    preset(band, cfg.seed, &cfg.out_dir)
        .ok()?
        .into_iter()
        .find(|c| c.l == cfg.l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows_match_production_parameters() {
        let low = preset("table1-low-p", 1, "o").unwrap();
        let row = low.iter().find(|c| c.l == 24).unwrap();
        assert_eq!(
            (row.n_samples, row.b, row.t_min, row.t_max, row.n_t),
            (400, 19, 1.40, 2.50, 28)
        );

        let mid = preset("table1-mid-p", 1, "o").unwrap();
        let row = mid.iter().find(|c| c.l == 18).unwrap();
        assert_eq!(
            (row.n_samples, row.b, row.t_min, row.t_max, row.n_t),
            (2400, 19, 1.25, 2.40, 28)
        );

        let high = preset("table1-high-p", 1, "o").unwrap();
        let row = high.iter().find(|c| c.l == 9).unwrap();
        assert_eq!(
            (row.n_samples, row.b, row.t_min, row.t_max, row.n_t),
            (9600, 19, 0.9, 2.20, 32)
        );
        let row = high.iter().find(|c| c.l == 24).unwrap();
        assert_eq!((row.n_samples, row.b, row.n_t), (2400, 24, 48));
        assert!(high.iter().any(|c| c.p == 0.048));
        assert!(high.iter().any(|c| c.p == 0.055));
    }

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            for cfg in preset(name, 3, "out").unwrap() {
                cfg.validate().unwrap();
            }
        }
        assert!(preset("nope", 1, "o").is_err());
    }

    #[test]
    fn desk_scale_stays_under_one_percent_of_production() {
        for cfg in preset("desk-scale", 1, "o").unwrap() {
            let counterpart = table_counterpart(&cfg).unwrap();
            let ratio = cfg.estimated_sweeps() as f64 / counterpart.estimated_sweeps() as f64;
            assert!(
                ratio <= 0.01,
                "p = {}, L = {}: ratio {ratio}",
                cfg.p,
                cfg.l
            );
        }
    }
}
