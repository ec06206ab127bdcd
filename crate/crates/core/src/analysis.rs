//! Disorder averaging, bootstrap errors, crossings, phase boundary and
//! threshold estimation.
//!
//! Disorder averages follow the ratio-of-averages convention: the
//! susceptibilities are averaged over samples separately in the numerator
//! and denominator of the correlation-length formula. Errors propagate by
//! resampling: nonparametrically over disorder samples where the per-sample
//! data is available, parametrically from the quoted point errors where
//! only curves are given.

use crate::interp::{bisect, Pchip};
use crate::model;
use crate::observables::correlation_length;
use crate::rng::{derive_seed, Seed};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("insufficient samples at temperatures {0:?}")]
    InsufficientSamples(Vec<f64>),
    #[error("inconsistent sample counts across temperatures: {0:?}")]
    RaggedEnsemble(Vec<usize>),
    #[error("need at least {need} sizes, got {got}")]
    TooFewSizes { need: usize, got: usize },
    #[error("temperature ranges of sizes {0} and {1} do not overlap")]
    NoOverlap(u32, u32),
    #[error("duplicate boundary point at p = {0}")]
    DuplicateP(f64),
    #[error("boundary does not bracket the threshold")]
    NoBracket,
    #[error("empty boundary")]
    EmptyBoundary,
    #[error("{0}")]
    Model(#[from] model::ModelError),
    #[error("collapse optimization failed: {0}")]
    Optimization(String),
}

/// Default bootstrap resampling count.
pub const BOOTSTRAP_RESAMPLES: u32 = 500;

/// Resample a statistic with replacement; deterministic per seed. Returns
/// the mean and standard deviation of the statistic over resamples.
pub fn bootstrap<T, F>(
    samples: &[T],
    statistic: F,
    n_resample: u32,
    seed: Seed,
) -> Result<(f64, f64), AnalysisError>
where
    F: Fn(&[&T]) -> f64,
{
    if samples.len() < 2 {
        return Err(AnalysisError::TooFewSamples(samples.len()));
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut resample = Vec::with_capacity(samples.len());
    let mut acc = Welford::default();
    for _ in 0..n_resample {
        resample.clear();
        for _ in 0..samples.len() {
            resample.push(&samples[rng.gen_range(0..samples.len())]);
        }
        acc.push(statistic(&resample));
    }
    Ok((acc.mean, acc.population_std()))
}

/// Running mean/variance; exactly zero variance on constant input.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    fn population_std(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0).sqrt()
        }
    }
}

/// Per-(p, L) collection of per-sample susceptibilities, indexed
/// `[temperature][sample]`. Samples are coherent across temperatures: index
/// `s` refers to the same disorder realization everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderEnsemble {
    pub p: f64,
    pub l: u32,
    pub temps: Vec<f64>,
    pub chi0: Vec<Vec<f64>>,
    pub chik: Vec<Vec<f64>>,
    /// Samples dropped for failing to equilibrate.
    pub excluded: u32,
}

impl DisorderEnsemble {
    pub fn n_samples(&self) -> usize {
        self.chi0.first().map_or(0, |v| v.len())
    }

    fn check(&self, min_samples: usize) -> Result<(), AnalysisError> {
        let counts: Vec<usize> = self.chi0.iter().map(|v| v.len()).collect();
        if counts.windows(2).any(|w| w[0] != w[1])
            || self.chik.iter().map(|v| v.len()).ne(counts.iter().copied())
        {
            return Err(AnalysisError::RaggedEnsemble(counts));
        }
        let deficient: Vec<f64> = self
            .temps
            .iter()
            .zip(&counts)
            .filter(|(_, &c)| c < min_samples)
            .map(|(t, _)| *t)
            .collect();
        if !deficient.is_empty() {
            return Err(AnalysisError::InsufficientSamples(deficient));
        }
        Ok(())
    }

    /// Disorder-averaged `xi_L / L` at one temperature for a subset of
    /// sample indices.
    fn xi_over_l_at(&self, t_idx: usize, idx: &[usize]) -> f64 {
        let inv = 1.0 / idx.len() as f64;
        let chi0: f64 = idx.iter().map(|&s| self.chi0[t_idx][s]).sum::<f64>() * inv;
        let chik: f64 = idx.iter().map(|&s| self.chik[t_idx][s]).sum::<f64>() * inv;
        match correlation_length(chi0, chik, self.l as f64) {
            Ok(xi) => xi.value / self.l as f64,
            Err(_) => 0.0,
        }
    }
}

/// `xi_L / L` against temperature with bootstrap errors.
#[derive(Debug, Clone, PartialEq)]
pub struct XiCurve {
    pub l: u32,
    pub temps: Vec<f64>,
    pub values: Vec<f64>,
    pub sigmas: Vec<f64>,
}

/// Disorder-averaged curve with errors from bootstrap over samples.
pub fn xi_over_l_curve(
    ens: &DisorderEnsemble,
    n_resample: u32,
    seed: Seed,
) -> Result<XiCurve, AnalysisError> {
    ens.check(2)?;
    let n = ens.n_samples();
    let all: Vec<usize> = (0..n).collect();
    let values: Vec<f64> = (0..ens.temps.len())
        .map(|t| ens.xi_over_l_at(t, &all))
        .collect();

    // Sample indices are resampled coherently across the whole curve: the
    // same realization enters every temperature.
    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut acc = vec![Welford::default(); ens.temps.len()];
    let mut idx = Vec::with_capacity(n);
    for _ in 0..n_resample {
        idx.clear();
        for _ in 0..n {
            idx.push(rng.gen_range(0..n));
        }
        for t in 0..ens.temps.len() {
            acc[t].push(ens.xi_over_l_at(t, &idx));
        }
    }
    let sigmas = acc.iter().map(|w| w.population_std()).collect();
    Ok(XiCurve {
        l: ens.l,
        temps: ens.temps.clone(),
        values,
        sigmas,
    })
}

/// Crossing of one size pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCrossing {
    pub l_low: u32,
    pub l_high: u32,
    pub t_c: f64,
}

/// Outcome classification of a crossing search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingStatus {
    Crossed,
    /// A crossing exists centrally but fails to appear in a sizable part of
    /// the bootstrap resamples.
    Marginal,
    NoCrossing,
}

/// Combined crossing estimate for one disorder rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingEstimate {
    pub p: f64,
    pub t_c: f64,
    pub sigma_tc: f64,
    pub status: CrossingStatus,
    /// Fraction of bootstrap resamples in which a crossing existed.
    pub crossing_fraction: f64,
    pub pairs: Vec<PairCrossing>,
    /// Crossing of the largest size pair alone, to expose finite-size
    /// drift.
    pub largest_pair: Option<PairCrossing>,
    pub nu: Option<f64>,
}

/// Crossings observed in fewer than this fraction of resamples are
/// classified marginal.
pub const MARGINAL_FRACTION: f64 = 0.8;

fn pair_crossing(a: &XiCurve, b: &XiCurve, values_a: &[f64], values_b: &[f64]) -> Option<f64> {
    let lo = a.temps[0].max(b.temps[0]);
    let hi = a.temps.last().unwrap().min(*b.temps.last().unwrap());
    if hi <= lo {
        return None;
    }
    let pa = Pchip::new(&a.temps, values_a)?;
    let pb = Pchip::new(&b.temps, values_b)?;
    let g = |t: f64| pa.eval(t) - pb.eval(t);
    // Scan a dense grid for sign changes, then bisect each bracket.
    const GRID: usize = 256;
    let mut roots = Vec::new();
    let mut prev_t = lo;
    let mut prev_g = g(lo);
    for i in 1..=GRID {
        let t = lo + (hi - lo) * i as f64 / GRID as f64;
        let gt = g(t);
        if prev_g == 0.0 {
            roots.push(prev_t);
        } else if prev_g * gt < 0.0 {
            if let Some(r) = bisect(prev_t, t, 1e-10, g) {
                roots.push(r);
            }
        }
        prev_t = t;
        prev_g = gt;
    }
    if prev_g == 0.0 {
        roots.push(hi);
    }
    match roots.len() {
        0 => None,
        n => Some(roots[n / 2]),
    }
}

fn combined_crossing(
    curves: &[XiCurve],
    values: &[Vec<f64>],
    sigma_hint: &[Vec<f64>],
) -> (Option<f64>, Vec<PairCrossing>) {
    let mut pairs = Vec::new();
    let mut acc = 0.0f64;
    let mut weight = 0.0f64;
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            if let Some(t) = pair_crossing(&curves[i], &curves[j], &values[i], &values[j]) {
                pairs.push(PairCrossing {
                    l_low: curves[i].l.min(curves[j].l),
                    l_high: curves[i].l.max(curves[j].l),
                    t_c: t,
                });
                // Inverse-variance weight from the midpoint errors of the
                // two curves.
                let s = curve_sigma_at(&curves[i], sigma_hint.get(i), t)
                    .hypot(curve_sigma_at(&curves[j], sigma_hint.get(j), t));
                let w = if s > 0.0 { 1.0 / (s * s) } else { 1.0 };
                acc += w * t;
                weight += w;
            }
        }
    }
    let combined = if pairs.is_empty() {
        None
    } else {
        Some(acc / weight)
    };
    (combined, pairs)
}

fn curve_sigma_at(curve: &XiCurve, sigmas: Option<&Vec<f64>>, t: f64) -> f64 {
    let sig = sigmas.unwrap_or(&curve.sigmas);
    if sig.is_empty() {
        return 0.0;
    }
    // Nearest-knot error is accurate enough for weighting.
    let mut best = (f64::INFINITY, 0usize);
    for (i, &tk) in curve.temps.iter().enumerate() {
        let d = (tk - t).abs();
        if d < best.0 {
            best = (d, i);
        }
    }
    sig[best.1]
}

/// Locate the crossing of `xi_L / L` curves for two or more sizes.
///
/// The central estimate interpolates each curve with a monotone cubic and
/// combines pairwise roots by inverse variance. Errors come from a
/// parametric bootstrap that shifts each curve coherently within its quoted
/// point errors (disorder-average fluctuations move a curve as a whole, not
/// point by point); the fraction of perturbed replicas retaining a crossing
/// classifies the outcome as crossed, marginal or absent. When per-sample
/// data is available, [`find_crossing_from_ensembles`] propagates errors
/// nonparametrically instead.
pub fn find_crossing(
    curves: &[XiCurve],
    p: f64,
    n_resample: u32,
    seed: Seed,
) -> Result<CrossingEstimate, AnalysisError> {
    if curves.len() < 2 {
        return Err(AnalysisError::TooFewSizes {
            need: 2,
            got: curves.len(),
        });
    }
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let lo = curves[i].temps[0].max(curves[j].temps[0]);
            let hi = curves[i]
                .temps
                .last()
                .unwrap()
                .min(*curves[j].temps.last().unwrap());
            if hi <= lo {
                return Err(AnalysisError::NoOverlap(curves[i].l, curves[j].l));
            }
        }
    }

    let central_values: Vec<Vec<f64>> = curves.iter().map(|c| c.values.clone()).collect();
    let sigmas: Vec<Vec<f64>> = curves.iter().map(|c| c.sigmas.clone()).collect();
    let (central, pairs) = combined_crossing(curves, &central_values, &sigmas);

    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut found = 0u32;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_resample {
        let perturbed: Vec<Vec<f64>> = curves
            .iter()
            .map(|c| {
                let shift = gaussian(&mut rng);
                c.values
                    .iter()
                    .zip(&c.sigmas)
                    .map(|(&v, &s)| v + s * shift)
                    .collect()
            })
            .collect();
        if let (Some(t), _) = combined_crossing(curves, &perturbed, &sigmas) {
            found += 1;
            sum += t;
            sum_sq += t * t;
        }
    }
    let fraction = found as f64 / n_resample as f64;

    let Some(t_c) = central else {
        return Ok(CrossingEstimate {
            p,
            t_c: f64::NAN,
            sigma_tc: f64::NAN,
            status: CrossingStatus::NoCrossing,
            crossing_fraction: fraction,
            pairs,
            largest_pair: None,
            nu: None,
        });
    };
    let sigma_tc = if found > 1 {
        let m = sum / found as f64;
        (sum_sq / found as f64 - m * m).max(0.0).sqrt()
    } else {
        0.0
    };
    let status = if fraction < MARGINAL_FRACTION {
        CrossingStatus::Marginal
    } else {
        CrossingStatus::Crossed
    };
    let largest_pair = pairs
        .iter()
        .max_by_key(|pc| (pc.l_low, pc.l_high))
        .copied();
    Ok(CrossingEstimate {
        p,
        t_c,
        sigma_tc,
        status,
        crossing_fraction: fraction,
        pairs,
        largest_pair,
        nu: None,
    })
}

/// Crossing search with full nonparametric error propagation: disorder
/// samples are resampled per ensemble and the whole pipeline (averaging,
/// interpolation, pairwise roots, combination) reruns on each replica.
pub fn find_crossing_from_ensembles(
    ensembles: &[DisorderEnsemble],
    n_resample: u32,
    seed: Seed,
) -> Result<CrossingEstimate, AnalysisError> {
    if ensembles.len() < 2 {
        return Err(AnalysisError::TooFewSizes {
            need: 2,
            got: ensembles.len(),
        });
    }
    let p = ensembles[0].p;
    for ens in ensembles {
        ens.check(2)?;
    }

    // Point-estimate curves (needed for weighting and status); their
    // bootstrap sigmas come from per-ensemble resampling.
    let curves: Vec<XiCurve> = ensembles
        .iter()
        .enumerate()
        .map(|(i, ens)| {
            xi_over_l_curve(
                ens,
                n_resample,
                derive_seed("xi-curve", i as u64, &[ens.l as u64]),
            )
        })
        .collect::<Result<_, _>>()?;
    let central_values: Vec<Vec<f64>> = curves.iter().map(|c| c.values.clone()).collect();
    let sigmas: Vec<Vec<f64>> = curves.iter().map(|c| c.sigmas.clone()).collect();
    let (central, pairs) = combined_crossing(&curves, &central_values, &sigmas);

    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut found = 0u32;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_resample {
        let values: Vec<Vec<f64>> = ensembles
            .iter()
            .map(|ens| {
                let n = ens.n_samples();
                let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                (0..ens.temps.len())
                    .map(|t| ens.xi_over_l_at(t, &idx))
                    .collect()
            })
            .collect();
        if let (Some(t), _) = combined_crossing(&curves, &values, &sigmas) {
            found += 1;
            sum += t;
            sum_sq += t * t;
        }
    }
    let fraction = found as f64 / n_resample as f64;
    let Some(t_c) = central else {
        return Ok(CrossingEstimate {
            p,
            t_c: f64::NAN,
            sigma_tc: f64::NAN,
            status: CrossingStatus::NoCrossing,
            crossing_fraction: fraction,
            pairs,
            largest_pair: None,
            nu: None,
        });
    };
    let sigma_tc = if found > 1 {
        let m = sum / found as f64;
        (sum_sq / found as f64 - m * m).max(0.0).sqrt()
    } else {
        0.0
    };
    Ok(CrossingEstimate {
        p,
        t_c,
        sigma_tc,
        status: if fraction < MARGINAL_FRACTION {
            CrossingStatus::Marginal
        } else {
            CrossingStatus::Crossed
        },
        crossing_fraction: fraction,
        pairs: pairs.clone(),
        largest_pair: pairs.iter().max_by_key(|pc| (pc.l_low, pc.l_high)).copied(),
        nu: None,
    })
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; two uniform draws per call keeps the stream layout simple.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Interpolable phase boundary `T_c(p)` with an error band.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseBoundary {
    /// Knots sorted by p: `(p, t_c, sigma_tc)`.
    pub knots: Vec<(f64, f64, f64)>,
}

impl PhaseBoundary {
    pub fn p_min(&self) -> f64 {
        self.knots[0].0
    }

    pub fn p_max(&self) -> f64 {
        self.knots.last().unwrap().0
    }

    /// Piecewise-linear evaluation inside the knot range.
    pub fn eval(&self, p: f64) -> Option<f64> {
        self.eval_knots(p, |k| k.1)
    }

    fn eval_knots(&self, p: f64, y: impl Fn(&(f64, f64, f64)) -> f64) -> Option<f64> {
        if self.knots.is_empty() || p < self.p_min() || p > self.p_max() {
            return None;
        }
        let i = match self
            .knots
            .binary_search_by(|k| k.0.partial_cmp(&p).unwrap())
        {
            Ok(i) => return Some(y(&self.knots[i])),
            Err(i) => i - 1,
        };
        let (a, b) = (&self.knots[i], &self.knots[i + 1]);
        let t = (p - a.0) / (b.0 - a.0);
        Some(y(a) * (1.0 - t) + y(b) * t)
    }
}

/// Assemble crossing estimates into a boundary. Estimates without a
/// crossing are skipped; duplicate disorder rates are rejected.
pub fn build_phase_boundary(
    crossings: &[CrossingEstimate],
) -> Result<PhaseBoundary, AnalysisError> {
    let mut knots: Vec<(f64, f64, f64)> = crossings
        .iter()
        .filter(|c| !matches!(c.status, CrossingStatus::NoCrossing))
        .map(|c| (c.p, c.t_c, c.sigma_tc))
        .collect();
    if knots.is_empty() {
        return Err(AnalysisError::EmptyBoundary);
    }
    knots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if let Some(w) = knots.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(AnalysisError::DuplicateP(w[0].0));
    }
    Ok(PhaseBoundary { knots })
}

/// Threshold estimate: intersection of the boundary with the Nishimori
/// line.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEstimate {
    pub p_c: f64,
    pub sigma_pc: f64,
    /// Bracketing knots around the intersection.
    pub bracket: (f64, f64),
    pub boundary: PhaseBoundary,
    /// Fraction of knot-perturbed replicas that still bracketed a root.
    pub bracket_fraction: f64,
}

/// Root-find `T_c(p) = T_N(p)`; errors propagate by perturbing boundary
/// knots within their sigmas.
pub fn intersect_nishimori(
    boundary: &PhaseBoundary,
    n_resample: u32,
    seed: Seed,
) -> Result<ThresholdEstimate, AnalysisError> {
    if boundary.knots.len() < 2 {
        return Err(AnalysisError::TooFewSizes {
            need: 2,
            got: boundary.knots.len(),
        });
    }
    let root_of = |knots: &[(f64, f64, f64)]| -> Option<f64> {
        let b = PhaseBoundary {
            knots: knots.to_vec(),
        };
        let lo = b.p_min().max(1e-9);
        let hi = b.p_max().min(0.749);
        if hi <= lo {
            return None;
        }
        let g = |p: f64| b.eval(p).unwrap() - model::nishimori_temperature(p).unwrap();
        // Knot-aligned scan: the boundary is linear between knots, so sign
        // changes cannot hide between scan points and knots.
        let mut grid: Vec<f64> = b.knots.iter().map(|k| k.0.clamp(lo, hi)).collect();
        for i in 0..b.knots.len().saturating_sub(1) {
            grid.push((b.knots[i].0.clamp(lo, hi) + b.knots[i + 1].0.clamp(lo, hi)) / 2.0);
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        for w in grid.windows(2) {
            let (ga, gb) = (g(w[0]), g(w[1]));
            if ga == 0.0 {
                return Some(w[0]);
            }
            if ga * gb < 0.0 {
                return bisect(w[0], w[1], 1e-12, g);
            }
        }
        if g(*grid.last().unwrap()) == 0.0 {
            return Some(*grid.last().unwrap());
        }
        None
    };

    let Some(p_c) = root_of(&boundary.knots) else {
        return Err(AnalysisError::NoBracket);
    };
    let bracket = boundary
        .knots
        .windows(2)
        .find(|w| w[0].0 <= p_c && p_c <= w[1].0)
        .map(|w| (w[0].0, w[1].0))
        .unwrap_or((boundary.p_min(), boundary.p_max()));

    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut found = 0u32;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_resample {
        let perturbed: Vec<(f64, f64, f64)> = boundary
            .knots
            .iter()
            .map(|&(p, t, s)| (p, t + s * gaussian(&mut rng), s))
            .collect();
        if let Some(r) = root_of(&perturbed) {
            found += 1;
            sum += r;
            sum_sq += r * r;
        }
    }
    let sigma_pc = if found > 1 {
        let m = sum / found as f64;
        (sum_sq / found as f64 - m * m).max(0.0).sqrt()
    } else {
        0.0
    };
    Ok(ThresholdEstimate {
        p_c,
        sigma_pc,
        bracket,
        boundary: boundary.clone(),
        bracket_fraction: found as f64 / n_resample as f64,
    })
}

/// Outcome of the diagnostic finite-size scaling collapse.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseResult {
    pub nu: f64,
    /// Mean squared deviation from the master curve, error-weighted.
    pub quality: f64,
    pub degenerate: bool,
}

/// Estimate the scaling exponent by minimizing the scatter of
/// `xi_L / L` against `L^(1/nu) (T - T_c)`. Diagnostic only.
pub fn scaling_collapse(
    curves: &[XiCurve],
    t_c: f64,
) -> Result<CollapseResult, AnalysisError> {
    if curves.len() < 3 {
        return Err(AnalysisError::TooFewSizes {
            need: 3,
            got: curves.len(),
        });
    }
    let quality = |nu: f64| -> f64 {
        let mut pts: Vec<(f64, f64, f64)> = Vec::new();
        for c in curves {
            let scale = (c.l as f64).powf(1.0 / nu);
            for i in 0..c.temps.len() {
                pts.push((scale * (c.temps[i] - t_c), c.values[i], c.sigmas[i]));
            }
        }
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut acc = 0.0;
        let mut count = 0usize;
        for i in 1..pts.len() - 1 {
            let (x0, y0, _) = pts[i - 1];
            let (x, y, s) = pts[i];
            let (x1, y1, _) = pts[i + 1];
            if x1 <= x0 {
                continue;
            }
            let t = (x - x0) / (x1 - x0);
            let pred = y0 * (1.0 - t) + y1 * t;
            let denom = s * s + 1e-12;
            acc += (y - pred) * (y - pred) / denom;
            count += 1;
        }
        if count == 0 {
            f64::INFINITY
        } else {
            acc / count as f64
        }
    };

    // Coarse grid, then golden-section refinement.
    let mut best = (f64::INFINITY, 1.0);
    for i in 0..=72 {
        let nu = 0.4 + 3.6 * i as f64 / 72.0;
        let q = quality(nu);
        if q < best.0 {
            best = (q, nu);
        }
    }
    let (mut a, mut b) = ((best.1 - 0.15).max(0.3), best.1 + 0.15);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if quality(c) < quality(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let nu = 0.5 * (a + b);
    let q_best = quality(nu);

    // Flat size-independent curves make every nu equally good.
    let spread = [0.5, 1.0, 2.0, 3.5]
        .iter()
        .map(|&n| quality(n))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
            (lo.min(q), hi.max(q))
        });
    let degenerate = spread.1 - spread.0 <= 1e-9 * spread.1.abs().max(1e-12)
        || !q_best.is_finite();
    Ok(CollapseResult {
        nu,
        quality: q_best,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(k: u64) -> Seed {
        derive_seed("analysis-test", k, &[])
    }

    #[test]
    fn bootstrap_constant_samples_has_zero_sigma() {
        let samples = vec![2.5; 40];
        let (mean, sigma) =
            bootstrap(&samples, |s| s.iter().copied().sum::<f64>() / s.len() as f64, 500, seed(1))
                .unwrap();
        assert_eq!(mean, 2.5);
        assert_eq!(sigma, 0.0);
    }

    #[test]
    fn bootstrap_mean_of_standard_normals() {
        let mut rng = ChaCha8Rng::from_seed(seed(2));
        let samples: Vec<f64> = (0..1000).map(|_| gaussian(&mut rng)).collect();
        let (_, sigma) = bootstrap(
            &samples,
            |s| s.iter().copied().sum::<f64>() / s.len() as f64,
            1000,
            seed(3),
        )
        .unwrap();
        let want = 1.0 / 1000f64.sqrt();
        assert!(
            (sigma - want).abs() < 0.2 * want,
            "sigma {sigma} vs {want}"
        );
    }

    #[test]
    fn bootstrap_two_point_identity() {
        // Exact resampling distribution of the mean of {1, 3}: values
        // 1, 2, 3 with probabilities 1/4, 1/2, 1/4, so sd = 1/sqrt(2).
        let samples = vec![1.0, 3.0];
        let (mean, sigma) = bootstrap(
            &samples,
            |s| s.iter().copied().sum::<f64>() / s.len() as f64,
            500,
            seed(4),
        )
        .unwrap();
        assert!((mean - 2.0).abs() < 0.15);
        assert!((sigma - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.08);
    }

    #[test]
    fn bootstrap_requires_two_samples() {
        assert!(matches!(
            bootstrap(&[1.0], |_| 0.0, 10, seed(5)),
            Err(AnalysisError::TooFewSamples(1))
        ));
    }

    #[test]
    fn bootstrap_is_deterministic_per_seed() {
        let samples: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let stat = |s: &[&f64]| s.iter().copied().sum::<f64>() / s.len() as f64;
        let a = bootstrap(&samples, stat, 200, seed(6)).unwrap();
        let b = bootstrap(&samples, stat, 200, seed(6)).unwrap();
        let c = bootstrap(&samples, stat, 200, seed(7)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    fn line_curve(l: u32, slope: f64, intercept: f64, sigma: f64) -> XiCurve {
        let temps: Vec<f64> = (0..21).map(|i| 1.0 + 0.05 * i as f64).collect();
        XiCurve {
            l,
            values: temps.iter().map(|&t| intercept + slope * t).collect(),
            sigmas: vec![sigma; temps.len()],
            temps,
        }
    }

    #[test]
    fn synthetic_lines_cross_where_constructed() {
        // Lines y = 1 - 0.5 (T - 1.4) and y = 1 + 0.8 (T - 1.4) meet at 1.4.
        let a = line_curve(9, -0.5, 1.0 + 0.5 * 1.4, 0.0);
        let b = line_curve(12, 0.8, 1.0 - 0.8 * 1.4, 0.0);
        let est = find_crossing(&[a, b], 0.0, 200, seed(8)).unwrap();
        assert_eq!(est.status, CrossingStatus::Crossed);
        assert!((est.t_c - 1.4).abs() < 1e-6, "t_c = {}", est.t_c);
        assert_eq!(est.pairs.len(), 1);
    }

    #[test]
    fn parallel_lines_report_no_crossing() {
        let a = line_curve(9, -0.5, 2.0, 0.001);
        let b = line_curve(12, -0.5, 1.5, 0.001);
        let est = find_crossing(&[a, b], 0.1, 200, seed(9)).unwrap();
        assert_eq!(est.status, CrossingStatus::NoCrossing);
        assert!(est.t_c.is_nan());
    }

    #[test]
    fn tangential_touch_is_marginal() {
        // Curves touching within error bars: crossing exists in some
        // resamples only.
        let temps: Vec<f64> = (0..21).map(|i| 1.0 + 0.05 * i as f64).collect();
        let a = XiCurve {
            l: 9,
            values: temps.iter().map(|&t| 0.5 + 0.3 * (t - 1.5).abs()).collect(),
            sigmas: vec![0.02; temps.len()],
            temps: temps.clone(),
        };
        // Just barely above a at the closest approach: the central curves
        // cross twice near 1.5, but a fifth of a sigma separates them.
        let b = XiCurve {
            l: 12,
            values: temps
                .iter()
                .map(|&t| 0.504 + 0.3 * (t - 1.5) * (t - 1.5))
                .collect(),
            sigmas: vec![0.02; temps.len()],
            temps,
        };
        let est = find_crossing(&[a, b], 0.055, 400, seed(10)).unwrap();
        assert!(
            est.crossing_fraction > 0.02 && est.crossing_fraction < MARGINAL_FRACTION,
            "fraction {}",
            est.crossing_fraction
        );
        assert_eq!(est.status, CrossingStatus::Marginal);
    }

    #[test]
    fn crossing_is_invariant_under_curve_order() {
        let a = line_curve(9, -0.4, 1.9, 0.01);
        let b = line_curve(12, 0.3, 0.9, 0.01);
        let c = line_curve(18, 0.7, 0.35, 0.01);
        let e1 = find_crossing(&[a.clone(), b.clone(), c.clone()], 0.0, 100, seed(11)).unwrap();
        let e2 = find_crossing(&[c, a, b], 0.0, 100, seed(11)).unwrap();
        assert!((e1.t_c - e2.t_c).abs() < 1e-9);
        assert_eq!(e1.pairs.len(), e2.pairs.len());
    }

    #[test]
    fn no_temperature_overlap_is_an_error() {
        let mut a = line_curve(9, -0.5, 2.0, 0.01);
        let b = line_curve(12, 0.5, 0.0, 0.01);
        for t in a.temps.iter_mut() {
            *t += 10.0;
        }
        assert!(matches!(
            find_crossing(&[a, b], 0.0, 50, seed(12)),
            Err(AnalysisError::NoOverlap(_, _))
        ));
    }

    #[test]
    fn ensembles_requires_two_samples_everywhere() {
        let ens = DisorderEnsemble {
            p: 0.0,
            l: 9,
            temps: vec![1.0, 1.5],
            chi0: vec![vec![1.0], vec![1.0]],
            chik: vec![vec![0.5], vec![0.5]],
            excluded: 0,
        };
        assert!(matches!(
            xi_over_l_curve(&ens, 100, seed(13)),
            Err(AnalysisError::InsufficientSamples(_))
        ));
    }

    #[test]
    fn identical_samples_give_zero_width_errors() {
        let ens = DisorderEnsemble {
            p: 0.0,
            l: 9,
            temps: vec![1.0, 1.5, 2.0],
            chi0: vec![vec![4.0; 8], vec![3.0; 8], vec![2.0; 8]],
            chik: vec![vec![1.0; 8], vec![1.5; 8], vec![1.8; 8]],
            excluded: 0,
        };
        let curve = xi_over_l_curve(&ens, 300, seed(14)).unwrap();
        assert!(curve.sigmas.iter().all(|&s| s == 0.0));
        let want = correlation_length(4.0, 1.0, 9.0).unwrap().value / 9.0;
        assert!((curve.values[0] - want).abs() < 1e-12);
    }

    #[test]
    fn boundary_anchors_and_interpolates() {
        let single = build_phase_boundary(&[CrossingEstimate {
            p: 0.0,
            t_c: 1.65,
            sigma_tc: 0.01,
            status: CrossingStatus::Crossed,
            crossing_fraction: 1.0,
            pairs: vec![],
            largest_pair: None,
            nu: None,
        }])
        .unwrap();
        assert_eq!(single.eval(0.0), Some(1.65));
        assert_eq!(single.eval(0.01), None);

        let two = build_phase_boundary(&[
            crossing_at(0.0, 1.65, 0.01),
            crossing_at(0.048, 1.251, 0.008),
        ])
        .unwrap();
        // Linear segment between the knots.
        let mid = two.eval(0.024).unwrap();
        assert!((mid - (1.65 + 1.251) / 2.0).abs() < 1e-12);
        // Interpolation passes through the knots exactly.
        assert_eq!(two.eval(0.048), Some(1.251));
    }

    fn crossing_at(p: f64, t_c: f64, sigma: f64) -> CrossingEstimate {
        CrossingEstimate {
            p,
            t_c,
            sigma_tc: sigma,
            status: CrossingStatus::Crossed,
            crossing_fraction: 1.0,
            pairs: vec![],
            largest_pair: None,
            nu: None,
        }
    }

    #[test]
    fn duplicate_p_is_rejected() {
        assert!(matches!(
            build_phase_boundary(&[crossing_at(0.01, 1.5, 0.01), crossing_at(0.01, 1.4, 0.01)]),
            Err(AnalysisError::DuplicateP(_))
        ));
    }

    #[test]
    fn planted_threshold_is_recovered() {
        // Boundary equal to the Nishimori curve shifted to cross at 0.055;
        // a knot sits at the planted root so the piecewise-linear boundary
        // crosses there exactly.
        let t_n = |p: f64| model::nishimori_temperature(p).unwrap();
        let ps = [0.01, 0.02, 0.03, 0.04, 0.05, 0.055, 0.06, 0.07];
        let knots: Vec<CrossingEstimate> = ps
            .iter()
            .map(|&p| crossing_at(p, t_n(p) + 0.8 * (0.055 - p), 1e-4))
            .collect();
        let boundary = build_phase_boundary(&knots).unwrap();
        let est = intersect_nishimori(&boundary, 200, seed(15)).unwrap();
        assert!((est.p_c - 0.055).abs() < 1e-6, "p_c = {}", est.p_c);
        assert!(est.bracket.0 <= 0.055 && 0.055 <= est.bracket.1);
    }

    #[test]
    fn boundary_above_nishimori_everywhere_fails_to_bracket() {
        let knots: Vec<CrossingEstimate> = (1..=5)
            .map(|i| {
                let p = 0.01 * i as f64;
                crossing_at(p, model::nishimori_temperature(p).unwrap() + 0.5, 1e-4)
            })
            .collect();
        let boundary = build_phase_boundary(&knots).unwrap();
        assert!(matches!(
            intersect_nishimori(&boundary, 50, seed(16)),
            Err(AnalysisError::NoBracket)
        ));
    }

    #[test]
    fn threshold_moves_continuously_with_knots() {
        let t_n = |p: f64| model::nishimori_temperature(p).unwrap();
        let base: Vec<CrossingEstimate> = (1..=6)
            .map(|i| {
                let p = 0.01 * i as f64;
                crossing_at(p, t_n(p) + (0.04 - p), 1e-4)
            })
            .collect();
        let b0 = build_phase_boundary(&base).unwrap();
        let p0 = intersect_nishimori(&b0, 10, seed(17)).unwrap().p_c;
        for eps in [1e-4, 1e-3] {
            let mut shifted = base.clone();
            for k in shifted.iter_mut() {
                k.t_c += eps;
            }
            let b1 = build_phase_boundary(&shifted).unwrap();
            let p1 = intersect_nishimori(&b1, 10, seed(18)).unwrap().p_c;
            assert!(
                (p1 - p0).abs() < 20.0 * eps,
                "eps {eps}: moved {}",
                (p1 - p0).abs()
            );
            assert!(p1 > p0, "raising the boundary must raise p_c");
        }
    }

    #[test]
    fn collapse_recovers_planted_exponent() {
        // Synthetic master curve X(u) = 1 / (1 + u^2) with nu = 1.5.
        let nu_true = 1.5;
        let t_c = 1.3;
        let curves: Vec<XiCurve> = [9u32, 12, 18, 24]
            .iter()
            .map(|&l| {
                let temps: Vec<f64> = (0..25).map(|i| 1.0 + 0.025 * i as f64).collect();
                let scale = (l as f64).powf(1.0 / nu_true);
                XiCurve {
                    l,
                    values: temps
                        .iter()
                        .map(|&t| {
                            let u = scale * (t - t_c);
                            1.0 / (1.0 + u * u)
                        })
                        .collect(),
                    sigmas: vec![0.01; temps.len()],
                    temps,
                }
            })
            .collect();
        let res = scaling_collapse(&curves, t_c).unwrap();
        assert!(!res.degenerate);
        assert!(
            (res.nu - nu_true).abs() < 0.1 * nu_true,
            "nu = {} vs {nu_true}",
            res.nu
        );
        // Quality degrades when the wrong critical temperature is used.
        let off = scaling_collapse(&curves, t_c + 0.1).unwrap();
        assert!(off.quality > res.quality);
    }

    #[test]
    fn flat_curves_are_degenerate() {
        let curves: Vec<XiCurve> = [9u32, 12, 18]
            .iter()
            .map(|&l| {
                let temps: Vec<f64> = (0..10).map(|i| 1.0 + 0.1 * i as f64).collect();
                XiCurve {
                    l,
                    values: vec![0.7; temps.len()],
                    sigmas: vec![0.01; temps.len()],
                    temps,
                }
            })
            .collect();
        let res = scaling_collapse(&curves, 1.5).unwrap();
        assert!(res.degenerate);
    }
}
