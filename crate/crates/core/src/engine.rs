//! Equilibrium sampling of the compiled model.
//!
//! Spin states are bit packed: one bit per link spin (bit 0 encodes +1) and
//! one byte per triangle holding which of the four admissible zz sign
//! patterns it is in, so triangle constraints cannot be violated by any
//! update. Energies are exact integers (`J = 1`) and are maintained
//! incrementally, so the cached energy can never drift from a full
//! recompute.
//!
//! A run proceeds in two phases: an equilibration phase of at least `2^b`
//! sweeps, extended in whole powers of two until the logarithmic-binning
//! criterion is satisfied (or a hard cap of `2^(b + extra)` is reached, in
//! which case the sample is flagged), followed by a measurement phase of
//! equal length recording observables at a fixed interval. One
//! replica-exchange pass (alternating even/odd neighbor pairs) follows
//! every sweep.

use crate::lattice::SpinRegistry;
use crate::model::{
    energy_unchecked, sign_from_parity, spins_per_class, DisorderRealization, InteractionTable,
    ModelError,
};
use crate::observables::{MeasurementSeries, Record};
use crate::rng::{stream_rng, Seed};
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid temperature ladder: {0}")]
    Ladder(String),
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Sign of zz spin `corner` under pattern `p`: `+1` iff `p == 0` or
/// `p == corner + 1`. Patterns 0..=3 encode (+++), (+--), (-+-), (--+).
#[inline]
fn pattern_bit(pattern: u8, corner: u8) -> u64 {
    (pattern != 0 && pattern != corner + 1) as u64
}

/// Bit-packed spin assignment. Bit = 1 encodes spin -1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinState {
    n_x: u32,
    n_y: u32,
    x_words: Vec<u64>,
    y_words: Vec<u64>,
    patterns: Vec<u8>,
}

fn words(n: u32) -> usize {
    (n as usize).div_ceil(64)
}

impl SpinState {
    pub fn all_up(n_x: u32, n_y: u32, n_triangles: u32) -> Self {
        Self {
            n_x,
            n_y,
            x_words: vec![0; words(n_x)],
            y_words: vec![0; words(n_y)],
            patterns: vec![0; n_triangles as usize],
        }
    }

    pub fn random(n_x: u32, n_y: u32, n_triangles: u32, rng: &mut impl Rng) -> Self {
        let mut s = Self::all_up(n_x, n_y, n_triangles);
        for w in s.x_words.iter_mut().chain(s.y_words.iter_mut()) {
            *w = rng.next_u64();
        }
        mask_tail(&mut s.x_words, n_x);
        mask_tail(&mut s.y_words, n_y);
        for p in s.patterns.iter_mut() {
            *p = rng.gen_range(0..4u8);
        }
        s
    }

    pub fn n_x(&self) -> u32 {
        self.n_x
    }

    pub fn n_y(&self) -> u32 {
        self.n_y
    }

    pub fn n_triangles(&self) -> u32 {
        self.patterns.len() as u32
    }

    pub fn patterns(&self) -> &[u8] {
        &self.patterns
    }

    #[inline]
    pub fn x_bit(&self, i: u32) -> u64 {
        (self.x_words[(i / 64) as usize] >> (i % 64)) & 1
    }

    #[inline]
    pub fn y_bit(&self, i: u32) -> u64 {
        (self.y_words[(i / 64) as usize] >> (i % 64)) & 1
    }

    pub fn set_x_bit(&mut self, i: u32, bit: u64) {
        let w = &mut self.x_words[(i / 64) as usize];
        *w = (*w & !(1 << (i % 64))) | ((bit & 1) << (i % 64));
    }

    pub fn set_y_bit(&mut self, i: u32, bit: u64) {
        let w = &mut self.y_words[(i / 64) as usize];
        *w = (*w & !(1 << (i % 64))) | ((bit & 1) << (i % 64));
    }

    #[inline]
    pub fn flip_x(&mut self, i: u32) {
        self.x_words[(i / 64) as usize] ^= 1 << (i % 64);
    }

    #[inline]
    pub fn flip_y(&mut self, i: u32) {
        self.y_words[(i / 64) as usize] ^= 1 << (i % 64);
    }

    #[inline]
    pub fn pattern(&self, tri: u32) -> u8 {
        self.patterns[tri as usize]
    }

    pub fn set_pattern(&mut self, tri: u32, pattern: u8) {
        debug_assert!(pattern < 4);
        self.patterns[tri as usize] = pattern;
    }

    /// Sign bit of the zz spin at (triangle, corner); 1 encodes -1.
    #[inline]
    pub fn zz_bit(&self, tri: u32, corner: u8) -> u64 {
        pattern_bit(self.patterns[tri as usize], corner)
    }

    /// Sign (+-1) of a global spin id under the standard layout
    /// (x links, then y links, then zz spins in qubit order).
    pub fn spin_sign(&self, spin: u32, table: &InteractionTable) -> i64 {
        let bit = if spin < self.n_x {
            self.x_bit(spin)
        } else if spin < self.n_x + self.n_y {
            self.y_bit(spin - self.n_x)
        } else {
            let qubit = spin - self.n_x - self.n_y;
            let (tri, corner) = table.tri_of_qubit[qubit as usize];
            self.zz_bit(tri, corner)
        };
        sign_from_parity(bit)
    }

    /// Copy of the state with every spin of the two given color classes
    /// flipped. Each triangle holds one zz spin of every color, so the
    /// result satisfies the constraints by construction.
    pub fn with_classes_flipped(
        &self,
        registry: &SpinRegistry,
        table: &InteractionTable,
        pair: [crate::lattice::Color; 2],
    ) -> SpinState {
        let mut out = self.clone();
        let in_pair = |spin: u32| {
            let c = registry.colors[spin as usize];
            c == pair[0] || c == pair[1]
        };
        for i in 0..self.n_x {
            if in_pair(i) {
                out.flip_x(i);
            }
        }
        for i in 0..self.n_y {
            if in_pair(self.n_x + i) {
                out.flip_y(i);
            }
        }
        for (t, tri) in table.triangles.iter().enumerate() {
            let mut signs = [0i64; 3];
            for (c, &q) in tri.iter().enumerate() {
                let bit = self.zz_bit(t as u32, c as u8);
                let flip = in_pair(self.n_x + self.n_y + q);
                signs[c] = sign_from_parity(bit ^ flip as u64);
            }
            out.set_pattern(t as u32, pattern_from_signs(signs));
        }
        out
    }

    /// Dense key over all free degrees of freedom; usable as a histogram
    /// index for instances within the enumeration bound.
    pub fn state_key(&self) -> u64 {
        let mut key = 0u64;
        let mut shift = 0u32;
        for i in 0..self.n_x {
            key |= self.x_bit(i) << shift;
            shift += 1;
        }
        for i in 0..self.n_y {
            key |= self.y_bit(i) << shift;
            shift += 1;
        }
        for &p in &self.patterns {
            key |= (p as u64) << shift;
            shift += 2;
        }
        key
    }
}

fn mask_tail(words: &mut [u64], n: u32) {
    let rem = n % 64;
    if rem != 0 {
        if let Some(last) = words.last_mut() {
            *last &= (1u64 << rem) - 1;
        }
    }
}

fn pattern_from_signs(signs: [i64; 3]) -> u8 {
    match signs {
        [1, 1, 1] => 0,
        [1, -1, -1] => 1,
        [-1, 1, -1] => 2,
        [-1, -1, 1] => 3,
        other => panic!("sign triple {other:?} violates the zz constraint"),
    }
}

/// Strictly increasing temperature grid, geometric between exact endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureLadder {
    pub t_min: f64,
    pub t_max: f64,
    pub temps: Vec<f64>,
    /// Descending: rung 0 is the coldest.
    pub betas: Vec<f64>,
}

impl TemperatureLadder {
    pub fn geometric(t_min: f64, t_max: f64, n_t: u32) -> Result<Self, EngineError> {
        if !(t_min.is_finite() && t_max.is_finite() && t_min > 0.0 && t_max > t_min) {
            return Err(EngineError::Ladder(format!(
                "need 0 < t_min < t_max, got [{t_min}, {t_max}]"
            )));
        }
        if n_t < 2 {
            return Err(EngineError::Ladder(format!("need at least 2 rungs, got {n_t}")));
        }
        let ratio = (t_max / t_min).powf(1.0 / (n_t - 1) as f64);
        let mut temps: Vec<f64> = (0..n_t).map(|k| t_min * ratio.powi(k as i32)).collect();
        temps[0] = t_min;
        temps[(n_t - 1) as usize] = t_max;
        let betas = temps.iter().map(|t| 1.0 / t).collect();
        Ok(Self {
            t_min,
            t_max,
            temps,
            betas,
        })
    }

    pub fn n_rungs(&self) -> u32 {
        self.temps.len() as u32
    }

    /// Rung whose temperature is closest to `t`.
    pub fn nearest_rung(&self, t: f64) -> u32 {
        let mut best = (f64::INFINITY, 0u32);
        for (k, &tk) in self.temps.iter().enumerate() {
            let d = (tk - t).abs();
            if d < best.0 {
                best = (d, k as u32);
            }
        }
        best.1
    }
}

/// Acceptance thresholds for the bounded positive energy steps: a move with
/// `delta_e = d > 0` is accepted when a uniform u64 draw falls below
/// `thresholds[d]` (stored widened so probability one stays exact).
#[derive(Debug, Clone)]
struct AcceptTable {
    thresholds: [u128; MAX_LOCAL_DELTA + 1],
}

/// Largest local energy change: a triangle move touches four couplings.
const MAX_LOCAL_DELTA: usize = 12;

impl AcceptTable {
    fn new(beta: f64) -> Self {
        let mut thresholds = [0u128; MAX_LOCAL_DELTA + 1];
        for (d, t) in thresholds.iter_mut().enumerate() {
            let p = (-beta * d as f64).exp();
            *t = if p >= 1.0 {
                1u128 << 64
            } else {
                (p * 2f64.powi(64)) as u128
            };
        }
        Self { thresholds }
    }

    #[inline]
    fn accept(&self, delta_e: i64, rng: &mut ChaCha8Rng) -> bool {
        if delta_e <= 0 {
            return true;
        }
        ((rng.next_u64() as u128) < self.thresholds[delta_e as usize]) as bool
    }
}

/// Per-qubit hot data for the sweep inner loop.
#[derive(Debug, Clone, Copy)]
struct HotQubit {
    x_gen: u32,
    y_gen: u32,
    tri: u32,
    corner: u8,
    /// Bits 0..3: tau^x, tau^y, tau^z negative flags.
    tau: u8,
}

/// Immutable bundle consumed by sweeps and measurements.
pub struct System<'a> {
    pub table: &'a InteractionTable,
    pub registry: &'a SpinRegistry,
    pub disorder: &'a DisorderRealization,
    hot: Vec<HotQubit>,
    /// Color index per global spin.
    spin_color: Vec<u8>,
    /// (cos, sin) of the k_min phase per global spin.
    phases: Vec<(f64, f64)>,
    pub class_size: u32,
}

impl<'a> System<'a> {
    pub fn new(
        table: &'a InteractionTable,
        registry: &'a SpinRegistry,
        disorder: &'a DisorderRealization,
    ) -> Result<Self, EngineError> {
        if disorder.n_qubits() != table.n_qubits {
            return Err(ModelError::Dimension("disorder vs table".into()).into());
        }
        if registry.total_spins() != table.n_x + table.n_y + table.n_qubits {
            return Err(ModelError::Dimension("registry vs table".into()).into());
        }
        let hot = (0..table.n_qubits)
            .map(|j| {
                let c = table.couplings[j as usize];
                let (tri, corner) = table.tri_of_qubit[j as usize];
                HotQubit {
                    x_gen: c.x_gen,
                    y_gen: c.y_gen,
                    tri,
                    corner,
                    tau: (disorder.tau_bit(0, j)
                        | (disorder.tau_bit(1, j) << 1)
                        | (disorder.tau_bit(2, j) << 2)) as u8,
                }
            })
            .collect();
        let kx = std::f64::consts::TAU / registry.period as f64;
        Ok(Self {
            table,
            registry,
            disorder,
            hot,
            spin_color: registry.colors.iter().map(|c| c.index() as u8).collect(),
            phases: registry
                .positions
                .iter()
                .map(|p| {
                    let theta = kx * p[0] as f64;
                    (theta.cos(), theta.sin())
                })
                .collect(),
            class_size: spins_per_class(registry)?,
        })
    }

    #[inline]
    fn tau_bit(&self, j: u32, w: u32) -> u64 {
        ((self.hot[j as usize].tau >> w) & 1) as u64
    }
}

/// One simulated configuration with its exactly-maintained caches.
#[derive(Debug, Clone, PartialEq)]
pub struct Replica {
    pub state: SpinState,
    pub energy: i64,
    /// Net spin sum per color class over all spins.
    pub m_sums: [i64; 3],
}

impl Replica {
    pub fn from_state(sys: &System, state: SpinState) -> Self {
        let energy = energy_unchecked(sys.table, sys.disorder, &state);
        let mut m_sums = [0i64; 3];
        for s in 0..sys.registry.total_spins() {
            m_sums[sys.spin_color[s as usize] as usize] += state.spin_sign(s, sys.table);
        }
        Self {
            state,
            energy,
            m_sums,
        }
    }

    pub fn hot_start(sys: &System, rng: &mut impl Rng) -> Self {
        Self::from_state(
            sys,
            SpinState::random(sys.table.n_x, sys.table.n_y, sys.table.n_triangles(), rng),
        )
    }

    /// Mean squared sublattice magnetization over the three classes.
    pub fn m2_avg(&self, class_size: u32) -> f64 {
        let np = class_size as f64;
        self.m_sums
            .iter()
            .map(|&m| {
                let v = m as f64 / np;
                v * v
            })
            .sum::<f64>()
            / 3.0
    }
}

/// Energy change of flipping X-link spin `g`, from the four couplings that
/// contain it.
#[inline]
fn delta_e_flip_x(sys: &System, state: &SpinState, g: u32) -> i64 {
    let mut d = 0i64;
    for &j in &sys.table.x_endpoints[g as usize] {
        let h = sys.hot[j as usize];
        let sy = state.x_bit(h.x_gen);
        let sx = state.y_bit(h.y_gen);
        let szz = pattern_bit(state.patterns[h.tri as usize], h.corner);
        d += sign_from_parity(sys.tau_bit(j, 1) ^ sy ^ szz);
        d += sign_from_parity(sys.tau_bit(j, 2) ^ sx ^ sy);
    }
    2 * d
}

/// Energy change of flipping Y-link spin `g`.
#[inline]
fn delta_e_flip_y(sys: &System, state: &SpinState, g: u32) -> i64 {
    let mut d = 0i64;
    for &j in &sys.table.y_endpoints[g as usize] {
        let h = sys.hot[j as usize];
        let sy = state.x_bit(h.x_gen);
        let sx = state.y_bit(h.y_gen);
        let szz = pattern_bit(state.patterns[h.tri as usize], h.corner);
        d += sign_from_parity(sys.tau_bit(j, 0) ^ sx ^ szz);
        d += sign_from_parity(sys.tau_bit(j, 2) ^ sx ^ sy);
    }
    2 * d
}

/// Energy change of retiling triangle `tri` from its current pattern to
/// `new_pattern`: only the corners whose sign changes contribute.
#[inline]
fn delta_e_pattern(sys: &System, state: &SpinState, tri: u32, new_pattern: u8) -> i64 {
    let old = state.patterns[tri as usize];
    let mut d = 0i64;
    for (corner, &j) in sys.table.triangles[tri as usize].iter().enumerate() {
        let c = corner as u8;
        if pattern_bit(old, c) == pattern_bit(new_pattern, c) {
            continue;
        }
        let h = sys.hot[j as usize];
        let sy = state.x_bit(h.x_gen);
        let sx = state.y_bit(h.y_gen);
        let szz = pattern_bit(old, c);
        d += sign_from_parity(sys.tau_bit(j, 0) ^ sx ^ szz);
        d += sign_from_parity(sys.tau_bit(j, 1) ^ sy ^ szz);
    }
    2 * d
}

fn sweep_with_table(
    sys: &System,
    rep: &mut Replica,
    accept: &AcceptTable,
    rng: &mut ChaCha8Rng,
) -> u64 {
    let mut accepted = 0u64;
    for g in 0..sys.table.n_x {
        let d = delta_e_flip_x(sys, &rep.state, g);
        if accept.accept(d, rng) {
            let old_sign = sign_from_parity(rep.state.x_bit(g));
            rep.state.flip_x(g);
            rep.energy += d;
            rep.m_sums[sys.spin_color[g as usize] as usize] -= 2 * old_sign;
            accepted += 1;
        }
    }
    let y_base = sys.table.n_x;
    for g in 0..sys.table.n_y {
        let d = delta_e_flip_y(sys, &rep.state, g);
        if accept.accept(d, rng) {
            let old_sign = sign_from_parity(rep.state.y_bit(g));
            rep.state.flip_y(g);
            rep.energy += d;
            rep.m_sums[sys.spin_color[(y_base + g) as usize] as usize] -= 2 * old_sign;
            accepted += 1;
        }
    }
    let zz_base = sys.table.n_x + sys.table.n_y;
    for tri in 0..sys.table.n_triangles() {
        let old = rep.state.pattern(tri);
        let proposal = (old + 1 + rng.gen_range(0..3u8)) % 4;
        let d = delta_e_pattern(sys, &rep.state, tri, proposal);
        if accept.accept(d, rng) {
            for (corner, &j) in sys.table.triangles[tri as usize].iter().enumerate() {
                let c = corner as u8;
                if pattern_bit(old, c) != pattern_bit(proposal, c) {
                    let old_sign = sign_from_parity(pattern_bit(old, c));
                    rep.m_sums[sys.spin_color[(zz_base + j) as usize] as usize] -= 2 * old_sign;
                }
            }
            rep.state.set_pattern(tri, proposal);
            rep.energy += d;
            accepted += 1;
        }
    }
    accepted
}

/// Debug-mode consistency check: cached energy against a full recompute,
/// and zz patterns within range.
fn debug_verify_caches(sys: &System, rep: &Replica) {
    debug_assert!(rep.state.patterns.iter().all(|&p| p < 4));
    debug_assert_eq!(
        rep.energy,
        energy_unchecked(sys.table, sys.disorder, &rep.state),
        "incremental energy drifted from full recompute"
    );
}

/// One full Metropolis sweep at inverse temperature `beta`: one proposed
/// flip per link spin and one proposed pattern change per triangle.
pub fn metropolis_sweep(
    sys: &System,
    rep: &mut Replica,
    beta: f64,
    rng: &mut ChaCha8Rng,
) -> u64 {
    sweep_with_table(sys, rep, &AcceptTable::new(beta), rng)
}

/// Replica set bound to a temperature ladder. Sweeps modify replica
/// configurations; exchange passes only permute `perm`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaEnsemble {
    pub replicas: Vec<Replica>,
    /// Rung -> replica id.
    pub perm: Vec<u32>,
    pub swap_attempts: Vec<u64>,
    pub swap_accepts: Vec<u64>,
}

impl ReplicaEnsemble {
    pub fn hot_start(sys: &System, n_rungs: u32, rngs: &mut [ChaCha8Rng]) -> Self {
        let replicas = (0..n_rungs)
            .map(|r| Replica::hot_start(sys, &mut rngs[r as usize]))
            .collect();
        Self {
            replicas,
            perm: (0..n_rungs).collect(),
            swap_attempts: vec![0; (n_rungs - 1) as usize],
            swap_accepts: vec![0; (n_rungs - 1) as usize],
        }
    }

    pub fn replica_at_rung(&self, rung: u32) -> &Replica {
        &self.replicas[self.perm[rung as usize] as usize]
    }

    /// Per-pair empirical swap acceptance rates.
    pub fn swap_rates(&self) -> Vec<f64> {
        self.swap_attempts
            .iter()
            .zip(&self.swap_accepts)
            .map(|(&a, &s)| if a == 0 { 0.0 } else { s as f64 / a as f64 })
            .collect()
    }
}

/// One replica-exchange pass over alternating adjacent rung pairs.
/// `parity` selects even (0-1, 2-3, ...) or odd (1-2, 3-4, ...) pairs.
pub fn pt_swap_pass(
    ensemble: &mut ReplicaEnsemble,
    betas: &[f64],
    parity: bool,
    rng: &mut ChaCha8Rng,
) {
    let start = parity as usize;
    let n = betas.len();
    let mut i = start;
    while i + 1 < n {
        let (ra, rb) = (ensemble.perm[i], ensemble.perm[i + 1]);
        let ea = ensemble.replicas[ra as usize].energy;
        let eb = ensemble.replicas[rb as usize].energy;
        let arg = (betas[i] - betas[i + 1]) * (ea - eb) as f64;
        ensemble.swap_attempts[i] += 1;
        let accept = arg >= 0.0 || rng.gen::<f64>() < arg.exp();
        if accept {
            ensemble.perm.swap(i, i + 1);
            ensemble.swap_accepts[i] += 1;
        }
        i += 2;
    }
}

/// Equilibration status of a logarithmic-binning tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equilibration {
    /// Fewer than three complete bins.
    Undecided,
    Equilibrated,
    NotEquilibrated,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct BinStat {
    count: u64,
    mean: f64,
    m2: f64,
    /// Sweeps per sub-block; grows with the bin so block means decorrelate
    /// even when the autocorrelation time is large.
    block_target: u64,
    block_sum: f64,
    block_n: u64,
    blocks: u64,
    block_mean: f64,
    block_m2: f64,
}

impl BinStat {
    fn for_bin(bin: usize) -> Self {
        Self {
            // 16 blocks per bin, at least 8 sweeps each.
            block_target: ((1u64 << bin) / 16).max(8),
            ..Self::default()
        }
    }

    fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
        self.block_sum += v;
        self.block_n += 1;
        if self.block_n == self.block_target {
            let bm = self.block_sum / self.block_target as f64;
            self.blocks += 1;
            let d = bm - self.block_mean;
            self.block_mean += d / self.blocks as f64;
            self.block_m2 += d * (bm - self.block_mean);
            self.block_sum = 0.0;
            self.block_n = 0;
        }
    }

    /// Standard error of the bin mean: the blocked estimate when enough
    /// sub-blocks exist (it absorbs autocorrelation), never below the naive
    /// per-sweep one.
    fn std_err(&self) -> f64 {
        let naive = if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
        };
        let blocked = if self.blocks < 2 {
            0.0
        } else {
            (self.block_m2 / (self.blocks - 1) as f64 / self.blocks as f64).sqrt()
        };
        naive.max(blocked)
    }
}

/// Base-2 logarithmic binning of tracked observables: bin `b` covers sweeps
/// `[2^b, 2^(b+1))`. Equilibration requires the last three complete bins of
/// every observable to agree pairwise within combined error bars.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibrationTracker {
    bins: Vec<Vec<BinStat>>,
    fed: u64,
}

impl EquilibrationTracker {
    pub fn new(n_obs: usize) -> Self {
        Self {
            bins: vec![Vec::new(); n_obs],
            fed: 0,
        }
    }

    pub fn n_observables(&self) -> usize {
        self.bins.len()
    }

    pub fn sweeps_fed(&self) -> u64 {
        self.fed
    }

    pub fn feed(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.bins.len());
        self.fed += 1;
        let bin = self.fed.ilog2() as usize;
        for (series, &v) in self.bins.iter_mut().zip(values) {
            while series.len() <= bin {
                series.push(BinStat::for_bin(series.len()));
            }
            series[bin].push(v);
        }
    }

    fn complete_bins(&self) -> usize {
        // Bin b is complete once sweep 2^(b+1) - 1 has been fed.
        ((self.fed + 1).max(1).ilog2() as usize).min(self.bins.first().map_or(0, |b| b.len()))
    }

    pub fn status(&self) -> Equilibration {
        let complete = self.complete_bins();
        if complete < 3 {
            return Equilibration::Undecided;
        }
        let window = &[complete - 3, complete - 2, complete - 1];
        for series in &self.bins {
            for (ai, &a) in window.iter().enumerate() {
                for &b in &window[ai + 1..] {
                    let (sa, sb) = (series[a], series[b]);
                    if (sa.mean - sb.mean).abs() > sa.std_err() + sb.std_err() {
                        return Equilibration::NotEquilibrated;
                    }
                }
            }
        }
        Equilibration::Equilibrated
    }

    /// Mean of the most recent complete bin of one observable.
    pub fn last_bin_mean(&self, obs: usize) -> Option<f64> {
        let complete = self.complete_bins();
        if complete == 0 {
            return None;
        }
        Some(self.bins[obs][complete - 1].mean)
    }

    /// Per-bin `(count, mean, standard error)` of one observable, complete
    /// bins only; for inspection and reporting.
    pub fn bin_table(&self, obs: usize) -> Vec<(u64, f64, f64)> {
        self.bins[obs][..self.complete_bins()]
            .iter()
            .map(|b| (b.count, b.mean, b.std_err()))
            .collect()
    }
}

/// Convenient re-export of the tracker decision.
pub fn is_equilibrated(tracker: &EquilibrationTracker) -> Equilibration {
    tracker.status()
}

/// Engine knobs for one sample run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunParams {
    /// Equilibration exponent: the base equilibration phase is `2^b` sweeps.
    pub b: u32,
    /// Sweeps between measurement records.
    pub measure_interval: u32,
    /// Extensions allowed past `2^b` before flagging, in doublings.
    pub hard_cap_extra: u32,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            b: 10,
            measure_interval: 4,
            hard_cap_extra: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Equilibrating,
    Measuring { eq_sweeps: u64 },
    Done { eq_sweeps: u64 },
}

/// Completed-run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub series: MeasurementSeries,
    pub temps: Vec<f64>,
    pub eq_sweeps: u64,
    pub total_sweeps: u64,
    pub equilibrated: bool,
    pub swap_rates: Vec<f64>,
    pub sweep_acceptance: f64,
}

/// A resumable parallel-tempering run over one disorder realization.
pub struct RunState<'a> {
    sys: System<'a>,
    ladder: &'a TemperatureLadder,
    params: RunParams,
    seed: Seed,
    ensemble: ReplicaEnsemble,
    /// Stream 0 swaps; stream 1 + rung sweeps.
    rngs: Vec<ChaCha8Rng>,
    tracker: EquilibrationTracker,
    accept_tables: Vec<AcceptTable>,
    sweep: u64,
    phase: Phase,
    series: MeasurementSeries,
    flagged: bool,
    proposals: u64,
    accepted: u64,
}

/// Observables tracked for the equilibration decision: energy and mean
/// squared sublattice magnetization at the coldest rung.
const TRACKED_OBSERVABLES: usize = 2;

impl<'a> RunState<'a> {
    pub fn new(
        table: &'a InteractionTable,
        registry: &'a SpinRegistry,
        disorder: &'a DisorderRealization,
        ladder: &'a TemperatureLadder,
        params: RunParams,
        seed: Seed,
    ) -> Result<Self, EngineError> {
        let sys = System::new(table, registry, disorder)?;
        let n_rungs = ladder.n_rungs();
        let mut rngs: Vec<ChaCha8Rng> =
            (0..=n_rungs as u64).map(|s| stream_rng(&seed, s)).collect();
        let ensemble = ReplicaEnsemble::hot_start(&sys, n_rungs, &mut rngs[1..]);
        let accept_tables = ladder.betas.iter().map(|&b| AcceptTable::new(b)).collect();
        Ok(Self {
            sys,
            ladder,
            params,
            seed,
            ensemble,
            rngs,
            tracker: EquilibrationTracker::new(TRACKED_OBSERVABLES),
            accept_tables,
            sweep: 0,
            phase: Phase::Equilibrating,
            series: MeasurementSeries::new(n_rungs),
            flagged: false,
            proposals: 0,
            accepted: 0,
        })
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Done { .. })
    }

    pub fn sweeps_done(&self) -> u64 {
        self.sweep
    }

    pub fn system(&self) -> &System<'a> {
        &self.sys
    }

    pub fn ensemble(&self) -> &ReplicaEnsemble {
        &self.ensemble
    }

    /// Advance up to `max_sweeps` sweeps; returns true when the run is done.
    pub fn step(&mut self, max_sweeps: u64) -> bool {
        for _ in 0..max_sweeps {
            if self.is_done() {
                break;
            }
            self.one_sweep();
        }
        self.is_done()
    }

    fn one_sweep(&mut self) {
        let n_rungs = self.ladder.n_rungs();
        for rung in 0..n_rungs {
            let replica = self.ensemble.perm[rung as usize] as usize;
            let (table, rng) = (
                &self.accept_tables[rung as usize],
                &mut self.rngs[(1 + rung) as usize],
            );
            self.accepted +=
                sweep_with_table(&self.sys, &mut self.ensemble.replicas[replica], table, rng);
        }
        self.proposals += n_rungs as u64
            * (self.sys.table.n_x + self.sys.table.n_y + self.sys.table.n_triangles()) as u64;
        let parity = self.sweep % 2 == 1;
        // Split the rng vector so the swap stream borrows independently.
        let (swap_rng, _) = self.rngs.split_first_mut().expect("swap stream");
        pt_swap_pass(&mut self.ensemble, &self.ladder.betas, parity, swap_rng);
        self.sweep += 1;
        if cfg!(debug_assertions) && self.sweep.is_power_of_two() {
            for rep in &self.ensemble.replicas {
                debug_verify_caches(&self.sys, rep);
            }
        }

        match self.phase {
            Phase::Equilibrating => {
                let cold = self.ensemble.replica_at_rung(0);
                self.tracker.feed(&[
                    cold.energy as f64,
                    cold.m2_avg(self.sys.class_size),
                ]);
                if self.sweep.is_power_of_two() && self.sweep >= 1u64 << self.params.b {
                    let decided = matches!(self.tracker.status(), Equilibration::Equilibrated);
                    let capped =
                        self.sweep >= 1u64 << (self.params.b + self.params.hard_cap_extra);
                    if decided || capped {
                        self.flagged = !decided;
                        self.phase = Phase::Measuring {
                            eq_sweeps: self.sweep,
                        };
                    }
                }
            }
            Phase::Measuring { eq_sweeps } => {
                let into = self.sweep - eq_sweeps;
                if into % self.params.measure_interval as u64 == 0 {
                    self.record();
                }
                if into >= eq_sweeps {
                    self.phase = Phase::Done { eq_sweeps };
                }
            }
            Phase::Done { .. } => {}
        }
    }

    fn record(&mut self) {
        for rung in 0..self.ladder.n_rungs() {
            let rep = self.ensemble.replica_at_rung(rung);
            let mut f_re = [0.0f64; 3];
            let mut f_im = [0.0f64; 3];
            for s in 0..self.sys.registry.total_spins() {
                let sign = rep.state.spin_sign(s, self.sys.table) as f64;
                let (pc, ps) = self.sys.phases[s as usize];
                let color = self.sys.spin_color[s as usize] as usize;
                f_re[color] += sign * pc;
                f_im[color] += sign * ps;
            }
            self.series.records[rung as usize].push(Record {
                sweep: self.sweep,
                energy: rep.energy,
                m_sums: rep.m_sums,
                f_re,
                f_im,
            });
        }
    }

    pub fn output(&self) -> Result<RunOutput, EngineError> {
        let Phase::Done { eq_sweeps } = self.phase else {
            return Err(EngineError::Checkpoint("run not finished".into()));
        };
        let mut series = self.series.clone();
        series.class_size = self.sys.class_size;
        Ok(RunOutput {
            series,
            temps: self.ladder.temps.clone(),
            eq_sweeps,
            total_sweeps: self.sweep,
            equilibrated: !self.flagged,
            swap_rates: self.ensemble.swap_rates(),
            sweep_acceptance: if self.proposals == 0 {
                0.0
            } else {
                self.accepted as f64 / self.proposals as f64
            },
        })
    }
}

/// Run one disorder sample to completion.
pub fn run_sample(
    table: &InteractionTable,
    registry: &SpinRegistry,
    disorder: &DisorderRealization,
    ladder: &TemperatureLadder,
    params: RunParams,
    seed: Seed,
) -> Result<RunOutput, EngineError> {
    let mut run = RunState::new(table, registry, disorder, ladder, params, seed)?;
    while !run.step(1 << 16) {}
    run.output()
}

/// Fixed-temperature Metropolis driver for detailed-balance checks: calls
/// `visit` with the state after every `sample_every`-th sweep.
pub fn fixed_beta_run(
    table: &InteractionTable,
    registry: &SpinRegistry,
    disorder: &DisorderRealization,
    beta: f64,
    sweeps: u64,
    sample_every: u64,
    seed: Seed,
    mut visit: impl FnMut(&SpinState),
) -> Result<Replica, EngineError> {
    let sys = System::new(table, registry, disorder)?;
    let mut rng = stream_rng(&seed, 1);
    let mut rep = Replica::hot_start(&sys, &mut rng);
    let accept = AcceptTable::new(beta);
    for sweep in 1..=sweeps {
        sweep_with_table(&sys, &mut rep, &accept, &mut rng);
        if sweep % sample_every == 0 {
            visit(&rep.state);
        }
        if cfg!(debug_assertions) && sweep.is_power_of_two() {
            debug_verify_caches(&sys, &rep);
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 8] = b"TSCCKPT\x01";

struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, at: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], EngineError> {
        if self.at + n > self.buf.len() {
            return Err(EngineError::Checkpoint("truncated".into()));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, EngineError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, EngineError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, EngineError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128, EngineError> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64, EngineError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, EngineError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn bytes(&mut self) -> Result<&'a [u8], EngineError> {
        let n = self.u64()? as usize;
        self.take(n)
    }
}

impl<'a> RunState<'a> {
    /// Identity fingerprint binding a checkpoint to its inputs: the lattice
    /// layout text, the disorder realization, the ladder, params and seed.
    fn identity(&self, layout_text: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(layout_text.as_bytes());
        h.update(self.sys.disorder.to_text().as_bytes());
        for t in &self.ladder.temps {
            h.update(t.to_bits().to_le_bytes());
        }
        h.update(self.params.b.to_le_bytes());
        h.update(self.params.measure_interval.to_le_bytes());
        h.update(self.params.hard_cap_extra.to_le_bytes());
        h.update(self.seed);
        h.finalize().into()
    }

    /// Serialize the full mutable state. `layout_text` is the canonical
    /// serialization of the lattice (or tiny system) this run is bound to;
    /// it is embedded so a restore against different inputs is refused.
    pub fn write_checkpoint(
        &self,
        layout_text: &str,
        mut out: impl Write,
    ) -> Result<(), EngineError> {
        let mut w = ByteWriter::new();
        w.buf.extend_from_slice(CHECKPOINT_MAGIC);
        w.bytes(&self.identity(layout_text));
        w.bytes(layout_text.as_bytes());

        w.u64(self.sweep);
        let (phase_tag, eq) = match self.phase {
            Phase::Equilibrating => (0u8, 0u64),
            Phase::Measuring { eq_sweeps } => (1, eq_sweeps),
            Phase::Done { eq_sweeps } => (2, eq_sweeps),
        };
        w.u8(phase_tag);
        w.u64(eq);
        w.u8(self.flagged as u8);
        w.u64(self.proposals);
        w.u64(self.accepted);

        w.u32(self.ensemble.replicas.len() as u32);
        for rep in &self.ensemble.replicas {
            for word in rep.state.x_words.iter().chain(&rep.state.y_words) {
                w.u64(*word);
            }
            w.bytes(&rep.state.patterns);
            w.i64(rep.energy);
            for m in rep.m_sums {
                w.i64(m);
            }
        }
        for &p in &self.ensemble.perm {
            w.u32(p);
        }
        for v in self.ensemble.swap_attempts.iter().chain(&self.ensemble.swap_accepts) {
            w.u64(*v);
        }

        for rng in &self.rngs {
            w.bytes(&rng.get_seed());
            w.u64(rng.get_stream());
            w.u128(rng.get_word_pos());
        }

        w.u64(self.tracker.fed);
        w.u32(self.tracker.bins.len() as u32);
        for series in &self.tracker.bins {
            w.u32(series.len() as u32);
            for bin in series {
                w.u64(bin.count);
                w.f64(bin.mean);
                w.f64(bin.m2);
                w.u64(bin.block_target);
                w.f64(bin.block_sum);
                w.u64(bin.block_n);
                w.u64(bin.blocks);
                w.f64(bin.block_mean);
                w.f64(bin.block_m2);
            }
        }

        w.u32(self.series.records.len() as u32);
        for rung in &self.series.records {
            w.u64(rung.len() as u64);
            for r in rung {
                w.u64(r.sweep);
                w.i64(r.energy);
                for m in r.m_sums {
                    w.i64(m);
                }
                for v in r.f_re.iter().chain(&r.f_im) {
                    w.f64(*v);
                }
            }
        }

        let digest: [u8; 32] = Sha256::digest(&w.buf).into();
        out.write_all(&w.buf)?;
        out.write_all(&digest)?;
        Ok(())
    }

    /// Restore a checkpoint against freshly constructed inputs. Refuses
    /// mismatched versions, corrupted payloads and diverging identities.
    pub fn read_checkpoint(
        table: &'a InteractionTable,
        registry: &'a SpinRegistry,
        disorder: &'a DisorderRealization,
        ladder: &'a TemperatureLadder,
        params: RunParams,
        seed: Seed,
        layout_text: &str,
        mut input: impl Read,
    ) -> Result<Self, EngineError> {
        let mut raw = Vec::new();
        input.read_to_end(&mut raw)?;
        if raw.len() < 32 + CHECKPOINT_MAGIC.len() {
            return Err(EngineError::Checkpoint("file too short".into()));
        }
        let (payload, digest) = raw.split_at(raw.len() - 32);
        let expect: [u8; 32] = Sha256::digest(payload).into();
        if digest != expect {
            return Err(EngineError::Checkpoint(
                "integrity digest mismatch (corrupted file)".into(),
            ));
        }
        let mut r = ByteReader::new(payload);
        if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(EngineError::Checkpoint(
                "bad magic or unsupported version".into(),
            ));
        }

        let mut fresh = RunState::new(table, registry, disorder, ladder, params, seed)?;
        let stored_identity = r.bytes()?.to_vec();
        let _stored_layout = r.bytes()?.to_vec();
        let expected = fresh.identity(layout_text);
        if stored_identity != expect_slice(&expected) {
            return Err(EngineError::Checkpoint(
                "identity mismatch: checkpoint was produced by different inputs".into(),
            ));
        }

        fresh.sweep = r.u64()?;
        let phase_tag = r.u8()?;
        let eq = r.u64()?;
        fresh.phase = match phase_tag {
            0 => Phase::Equilibrating,
            1 => Phase::Measuring { eq_sweeps: eq },
            2 => Phase::Done { eq_sweeps: eq },
            other => {
                return Err(EngineError::Checkpoint(format!("bad phase tag {other}")));
            }
        };
        fresh.flagged = r.u8()? != 0;
        fresh.proposals = r.u64()?;
        fresh.accepted = r.u64()?;

        let n_reps = r.u32()? as usize;
        if n_reps != fresh.ensemble.replicas.len() {
            return Err(EngineError::Checkpoint(format!(
                "replica count {} vs ladder {}",
                n_reps,
                fresh.ensemble.replicas.len()
            )));
        }
        for rep in fresh.ensemble.replicas.iter_mut() {
            for word in rep
                .state
                .x_words
                .iter_mut()
                .chain(rep.state.y_words.iter_mut())
            {
                *word = r.u64()?;
            }
            let patterns = r.bytes()?;
            if patterns.len() != rep.state.patterns.len() {
                return Err(EngineError::Checkpoint("pattern count mismatch".into()));
            }
            rep.state.patterns.copy_from_slice(patterns);
            rep.energy = r.i64()?;
            for m in rep.m_sums.iter_mut() {
                *m = r.i64()?;
            }
        }
        for p in fresh.ensemble.perm.iter_mut() {
            *p = r.u32()?;
        }
        for v in fresh
            .ensemble
            .swap_attempts
            .iter_mut()
            .chain(fresh.ensemble.swap_accepts.iter_mut())
        {
            *v = r.u64()?;
        }

        for rng in fresh.rngs.iter_mut() {
            let seed_bytes: [u8; 32] = r
                .bytes()?
                .try_into()
                .map_err(|_| EngineError::Checkpoint("rng seed length".into()))?;
            let stream = r.u64()?;
            let pos = r.u128()?;
            let mut restored = ChaCha8Rng::from_seed(seed_bytes);
            restored.set_stream(stream);
            restored.set_word_pos(pos);
            *rng = restored;
        }

        fresh.tracker.fed = r.u64()?;
        let n_obs = r.u32()? as usize;
        if n_obs != fresh.tracker.bins.len() {
            return Err(EngineError::Checkpoint("tracker layout mismatch".into()));
        }
        for series in fresh.tracker.bins.iter_mut() {
            let n_bins = r.u32()? as usize;
            series.clear();
            for _ in 0..n_bins {
                series.push(BinStat {
                    count: r.u64()?,
                    mean: r.f64()?,
                    m2: r.f64()?,
                    block_target: r.u64()?,
                    block_sum: r.f64()?,
                    block_n: r.u64()?,
                    blocks: r.u64()?,
                    block_mean: r.f64()?,
                    block_m2: r.f64()?,
                });
            }
        }

        let n_rungs = r.u32()? as usize;
        if n_rungs != fresh.series.records.len() {
            return Err(EngineError::Checkpoint("series layout mismatch".into()));
        }
        for rung in fresh.series.records.iter_mut() {
            let n_records = r.u64()? as usize;
            rung.clear();
            for _ in 0..n_records {
                let sweep = r.u64()?;
                let energy = r.i64()?;
                let mut m_sums = [0i64; 3];
                for m in m_sums.iter_mut() {
                    *m = r.i64()?;
                }
                let mut f = [0.0f64; 6];
                for v in f.iter_mut() {
                    *v = r.f64()?;
                }
                rung.push(Record {
                    sweep,
                    energy,
                    m_sums,
                    f_re: [f[0], f[1], f[2]],
                    f_im: [f[3], f[4], f[5]],
                });
            }
        }

        Ok(fresh)
    }
}

fn expect_slice(v: &[u8; 32]) -> &[u8] {
    v
}

use rand_chacha::rand_core::SeedableRng;
