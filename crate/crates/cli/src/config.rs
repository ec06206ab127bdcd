//! Flat key-value batch configuration.
//!
//! A config file describes one family of runs as `key = value` lines with
//! `#` comments. `p_list` and `l_list` expand to their cross product;
//! per-size overrides use an `_l<size>` suffix (`b_l18 = 13`). Unknown keys
//! are rejected outright: a silent typo in a long batch is worse than a
//! hard error.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Parameters of one `(p, L)` simulation cell family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub p: f64,
    pub l: u32,
    pub n_samples: u32,
    /// Equilibration exponent: base equilibration phase is `2^b` sweeps.
    pub b: u32,
    pub t_min: f64,
    pub t_max: f64,
    pub n_t: u32,
    pub seed: u64,
    pub measure_interval: u32,
    /// 0 = one worker per core.
    pub workers: u32,
    pub out_dir: String,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            bail!("p = {} outside [0, 1]", self.p);
        }
        if self.l < 3 || self.l % 3 != 0 {
            bail!("L = {} must be a multiple of 3 and at least 3", self.l);
        }
        if self.n_samples == 0 {
            bail!("n_samples must be positive");
        }
        if self.b == 0 || self.b > 30 {
            bail!("b = {} outside 1..=30", self.b);
        }
        if !(self.t_min.is_finite() && self.t_max.is_finite() && 0.0 < self.t_min) {
            bail!("temperatures must be positive and finite");
        }
        if self.t_min >= self.t_max {
            bail!("t_min {} must be below t_max {}", self.t_min, self.t_max);
        }
        if self.n_t < 2 || self.n_t > 128 {
            bail!("n_t = {} outside 2..=128", self.n_t);
        }
        if self.measure_interval == 0 {
            bail!("measure_interval must be positive");
        }
        Ok(())
    }

    /// Base sweep budget (equilibration + measurement over all rungs and
    /// samples), ignoring adaptive extension.
    pub fn estimated_sweeps(&self) -> u128 {
        2u128 * (1u128 << self.b) * self.n_t as u128 * self.n_samples as u128
    }

    /// Directory name of this cell relative to the output root.
    pub fn cell_dir(&self) -> String {
        format!("p{:.6}_L{}", self.p, self.l)
    }
}

/// Parse the flat key-value format into expanded run configs.
pub fn parse_config(text: &str) -> Result<Vec<RunConfig>> {
    let mut keys: BTreeMap<String, String> = BTreeMap::new();
    for (num, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got {raw:?}", num + 1))?;
        let key = k.trim().to_string();
        if keys.insert(key.clone(), v.trim().to_string()).is_some() {
            bail!("line {}: duplicate key {key:?}", num + 1);
        }
    }

    const BASE_KEYS: &[&str] = &[
        "p_list",
        "l_list",
        "n_samples",
        "b",
        "t_min",
        "t_max",
        "n_t",
        "seed",
        "measure_interval",
        "workers",
        "out",
    ];
    const OVERRIDABLE: &[&str] = &["n_samples", "b", "t_min", "t_max", "n_t"];

    let l_list: Vec<u32> = parse_list(
        keys.get("l_list")
            .ok_or_else(|| anyhow!("missing required key `l_list`"))?,
    )
    .context("l_list")?;

    // Reject unknown keys, including overrides for sizes not in l_list.
    for key in keys.keys() {
        let known = BASE_KEYS.contains(&key.as_str())
            || OVERRIDABLE.iter().any(|base| {
                key.strip_prefix(&format!("{base}_l"))
                    .and_then(|s| s.parse::<u32>().ok())
                    .map(|l| l_list.contains(&l))
                    .unwrap_or(false)
            });
        if !known {
            bail!("unknown key {key:?} (valid keys: {BASE_KEYS:?}, plus `<key>_l<size>` overrides of {OVERRIDABLE:?})");
        }
    }

    let p_list: Vec<f64> = parse_list(
        keys.get("p_list")
            .ok_or_else(|| anyhow!("missing required key `p_list`"))?,
    )
    .context("p_list")?;
    if p_list.is_empty() || l_list.is_empty() {
        bail!("p_list and l_list must be non-empty");
    }

    let get = |key: &str, default: Option<&str>| -> Result<String> {
        match (keys.get(key), default) {
            (Some(v), _) => Ok(v.clone()),
            (None, Some(d)) => Ok(d.to_string()),
            (None, None) => bail!("missing required key {key:?}"),
        }
    };
    let lookup = |base: &str, l: u32, default: Option<&str>| -> Result<String> {
        if let Some(v) = keys.get(&format!("{base}_l{l}")) {
            return Ok(v.clone());
        }
        get(base, default)
    };

    let seed: u64 = get("seed", Some("1"))?.parse().context("seed")?;
    let measure_interval: u32 = get("measure_interval", Some("4"))?
        .parse()
        .context("measure_interval")?;
    let workers: u32 = get("workers", Some("0"))?.parse().context("workers")?;
    let out_dir = get("out", Some("runs/out"))?;

    let mut configs = Vec::new();
    for &p in &p_list {
        for &l in &l_list {
            let cfg = RunConfig {
                p,
                l,
                n_samples: lookup("n_samples", l, None)?.parse().context("n_samples")?,
                b: lookup("b", l, None)?.parse().context("b")?,
                t_min: lookup("t_min", l, None)?.parse().context("t_min")?,
                t_max: lookup("t_max", l, None)?.parse().context("t_max")?,
                n_t: lookup("n_t", l, None)?.parse().context("n_t")?,
                seed,
                measure_interval,
                workers,
                out_dir: out_dir.clone(),
            };
            cfg.validate()
                .with_context(|| format!("config for p = {p}, L = {l}"))?;
            configs.push(cfg);
        }
    }
    Ok(configs)
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    s.split(',')
        .map(|item| item.trim().parse::<T>().map_err(Into::into))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# comment
p_list = 0.0, 0.048
l_list = 9, 12
n_samples = 8
n_samples_l12 = 4
b = 10
t_min = 1.1
t_max = 1.5
n_t = 6
seed = 7
out = runs/test
";

    #[test]
    fn parses_cross_product_with_overrides() {
        let configs = parse_config(GOOD).unwrap();
        assert_eq!(configs.len(), 4);
        let c = configs
            .iter()
            .find(|c| c.l == 12 && c.p == 0.048)
            .unwrap();
        assert_eq!(c.n_samples, 4);
        assert_eq!(c.seed, 7);
        assert_eq!(c.measure_interval, 4);
        let c9 = configs.iter().find(|c| c.l == 9).unwrap();
        assert_eq!(c9.n_samples, 8);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let bad = format!("{GOOD}\nn_sample = 3\n");
        let err = parse_config(&bad).unwrap_err().to_string();
        assert!(err.contains("unknown key"), "{err}");
        // Override for a size outside l_list is also unknown.
        let bad = format!("{GOOD}\nb_l18 = 12\n");
        assert!(parse_config(&bad).is_err());
    }

    #[test]
    fn duplicate_and_malformed_lines_are_rejected() {
        assert!(parse_config(&format!("{GOOD}\nseed = 9\n")).is_err());
        assert!(parse_config("p_list 0.1\nl_list = 9\n").is_err());
    }

    #[test]
    fn invariants_are_enforced() {
        for (key, value) in [
            ("p_list", "1.5"),
            ("l_list", "7"),
            ("b", "0"),
            ("n_t", "1"),
            ("t_min", "2.0"),
        ] {
            let text = GOOD
                .lines()
                .map(|l| {
                    if l.starts_with(&format!("{key} ")) {
                        format!("{key} = {value}")
                    } else {
                        l.to_string()
                    }
                })
                .collect::<Vec<_>>()
                .join("\n");
            assert!(parse_config(&text).is_err(), "{key} = {value}");
        }
    }
}
