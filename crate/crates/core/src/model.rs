//! From gauge structure to the simulated disordered Ising model.
//!
//! The compiler evaluates, for every qubit `j` and every single-qubit Pauli
//! `sigma^w_j`, which gauge generators it anticommutes with; the product of
//! the corresponding spins is the interaction multiplying the quenched sign
//! `tau^w_j`. Eliminating the two Z-generator spins of each qubit through
//! the constrained product spin `zz_j` leaves three two-spin couplings per
//! qubit:
//!
//! ```text
//! E = -J sum_j [ tau^x_j s^x_j zz_j + tau^y_j s^y_j zz_j + tau^z_j s^x_j s^y_j ]
//! ```
//!
//! with `J = 1`, so energies are exact integers. `s^x_j` names the link spin
//! coupling to `tau^x_j`, which lives on the qubit's Y-kind generator (a
//! sigma^x error anticommutes with sigma^y x sigma^y); this is derived, not
//! assumed, and compilation fails if any coupling does not reduce to the
//! two-spin form above.

use crate::engine::SpinState;
use crate::lattice::{GaugeGenerator, GeneratorKind, Lattice, SpinRegistry, Triangle};
use crate::pauli::{Pauli, PauliString};
use crate::rng::Seed;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use thiserror::Error;

pub mod tiny;

/// Enumeration feasibility bound for the exact oracles, in free spins.
pub const ENUMERATION_BOUND: u32 = 24;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("qubit {qubit}, component {component}: {detail}")]
    Compile {
        qubit: u32,
        component: &'static str,
        detail: String,
    },
    #[error("error probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("p = {0} outside (0, 3/4): Nishimori line undefined")]
    NishimoriDomain(f64),
    #[error("temperature {0} must be positive and finite")]
    TemperatureDomain(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid zz pattern {pattern} on triangle {triangle}")]
    InvalidPattern { triangle: u32, pattern: u8 },
    #[error("instance has {free} free spins, enumeration bound is {bound}")]
    TooLarge { free: u32, bound: u32 },
    #[error("malformed disorder serialization: {0}")]
    Parse(String),
}

/// Per-qubit coupling targets: the kind indices of the link generators whose
/// spins enter the qubit's three couplings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QubitCoupling {
    /// X-kind generator on this qubit (its spin multiplies `tau^y` and the
    /// `tau^z` pair term).
    pub x_gen: u32,
    /// Y-kind generator on this qubit (its spin multiplies `tau^x` and the
    /// `tau^z` pair term).
    pub y_gen: u32,
}

/// Compiled two-spin interactions plus the constraint layout the sampler
/// needs. `J = 1`; every qubit contributes exactly three couplings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionTable {
    pub n_qubits: u32,
    pub n_x: u32,
    pub n_y: u32,
    pub couplings: Vec<QubitCoupling>,
    /// Qubit triples forming one zz constraint group each.
    pub triangles: Vec<[u32; 3]>,
    /// `(triangle, corner)` of each qubit.
    pub tri_of_qubit: Vec<(u32, u8)>,
    /// The two qubits referencing each X-kind generator spin.
    pub x_endpoints: Vec<[u32; 2]>,
    /// The two qubits referencing each Y-kind generator spin.
    pub y_endpoints: Vec<[u32; 2]>,
}

impl InteractionTable {
    pub fn n_triangles(&self) -> u32 {
        self.triangles.len() as u32
    }

    /// Number of unconstrained binary degrees of freedom: both link-spin
    /// families plus two bits per constrained triangle.
    pub fn free_spins(&self) -> u32 {
        self.n_x + self.n_y + 2 * self.n_triangles()
    }

    /// Total coupling count (three per qubit).
    pub fn n_terms(&self) -> u32 {
        3 * self.n_qubits
    }
}

/// Raw anticommutation record of one Pauli component before gauge fixing:
/// the generators (by flat index) whose spins enter the product.
type RawTerm = Vec<usize>;

fn raw_terms(n_qubits: u32, generators: &[GaugeGenerator]) -> Vec<[RawTerm; 3]> {
    let n = n_qubits as usize;
    // Generators supported away from a qubit commute with every Pauli on
    // it, so only the incident ones need the symplectic test.
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, g) in generators.iter().enumerate() {
        for q in g.qubits {
            if (q as usize) < n {
                incident[q as usize].push(i);
            }
        }
    }
    let strings: Vec<PauliString> = generators
        .iter()
        .map(|g| {
            PauliString::two_body(
                n,
                (g.qubits[0] as usize, g.qubits[1] as usize),
                match g.kind {
                    GeneratorKind::X => Pauli::X,
                    GeneratorKind::Y => Pauli::Y,
                    GeneratorKind::Z => Pauli::Z,
                },
            )
        })
        .collect();

    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let mut terms: [RawTerm; 3] = Default::default();
        for (wi, w) in Pauli::ALL.iter().enumerate() {
            let sigma = PauliString::single(n, j, *w);
            terms[wi] = incident[j]
                .iter()
                .copied()
                .filter(|&i| sigma.anticommutes(&strings[i]))
                .collect();
        }
        out.push(terms);
    }
    out
}

/// Compile the gauge structure of a lattice into the production interaction
/// table.
pub fn compile_interactions(lat: &Lattice) -> Result<InteractionTable, ModelError> {
    compile_from_gauge(lat.n_qubits(), &lat.generators, &lat.triangles)
}

/// Compiler entry point shared by full lattices and the small oracle
/// instances: any gauge structure with the right local shape compiles.
pub fn compile_from_gauge(
    n_qubits: u32,
    generators: &[GaugeGenerator],
    triangles: &[Triangle],
) -> Result<InteractionTable, ModelError> {
    let raw = raw_terms(n_qubits, generators);

    let mut tri_of_qubit = vec![(u32::MAX, 0u8); n_qubits as usize];
    for t in triangles {
        for (c, &q) in t.qubits.iter().enumerate() {
            tri_of_qubit[q as usize] = (t.id, c as u8);
        }
    }

    let mut couplings = Vec::with_capacity(n_qubits as usize);
    let mut n_x = 0u32;
    let mut n_y = 0u32;
    for (j, terms) in raw.iter().enumerate() {
        let split = |term: &RawTerm| {
            let mut by_kind: [Vec<usize>; 3] = Default::default();
            for &i in term {
                by_kind[match generators[i].kind {
                    GeneratorKind::X => 0,
                    GeneratorKind::Y => 1,
                    GeneratorKind::Z => 2,
                }]
                .push(i);
            }
            by_kind
        };
        let shape_err = |component: &'static str, detail: String| ModelError::Compile {
            qubit: j as u32,
            component,
            detail,
        };
        // tau^x pairs with one Y generator and both Z generators, tau^y
        // with the X generator and both Z's, tau^z with the X and Y pair.
        let [x0, y0, z0] = split(&terms[0]);
        let [x1, y1, z1] = split(&terms[1]);
        let [x2, y2, z2] = split(&terms[2]);
        if !(x0.is_empty() && y0.len() == 1 && z0.len() == 2) {
            return Err(shape_err(
                "x",
                format!(
                    "expected {{Y, Z, Z}}, found {} X / {} Y / {} Z",
                    x0.len(),
                    y0.len(),
                    z0.len()
                ),
            ));
        }
        if !(x1.len() == 1 && y1.is_empty() && z1.len() == 2) {
            return Err(shape_err(
                "y",
                format!(
                    "expected {{X, Z, Z}}, found {} X / {} Y / {} Z",
                    x1.len(),
                    y1.len(),
                    z1.len()
                ),
            ));
        }
        if !(x2.len() == 1 && y2.len() == 1 && z2.is_empty()) {
            return Err(shape_err(
                "z",
                format!(
                    "expected {{X, Y}}, found {} X / {} Y / {} Z",
                    x2.len(),
                    y2.len(),
                    z2.len()
                ),
            ));
        }
        if x1 != x2 || y0 != y2 || z0 != z1 {
            return Err(shape_err(
                "cross",
                "components disagree on the qubit's generators".into(),
            ));
        }
        // The Z pair must collapse to the qubit's constrained zz spin: both
        // generators live in the qubit's own triangle.
        let (tri, _) = tri_of_qubit[j];
        if tri == u32::MAX {
            return Err(shape_err("zz", "qubit belongs to no triangle".into()));
        }
        let tri_ref = triangles
            .iter()
            .find(|t| t.id == tri)
            .expect("triangle id from tri_of_qubit");
        for &zi in &z0 {
            let kidx = generators[zi].kind_index;
            if !tri_ref.z_gens.contains(&kidx) {
                return Err(shape_err(
                    "zz",
                    format!("Z generator {} is outside the qubit's triangle", kidx),
                ));
            }
        }
        let x_gen = generators[x1[0]].kind_index;
        let y_gen = generators[y0[0]].kind_index;
        n_x = n_x.max(x_gen + 1);
        n_y = n_y.max(y_gen + 1);
        couplings.push(QubitCoupling { x_gen, y_gen });
    }

    let mut x_by_gen: Vec<Vec<u32>> = vec![Vec::new(); n_x as usize];
    let mut y_by_gen: Vec<Vec<u32>> = vec![Vec::new(); n_y as usize];
    for (j, c) in couplings.iter().enumerate() {
        x_by_gen[c.x_gen as usize].push(j as u32);
        y_by_gen[c.y_gen as usize].push(j as u32);
    }
    let pairs = |v: Vec<Vec<u32>>, kind: &'static str| -> Result<Vec<[u32; 2]>, ModelError> {
        v.into_iter()
            .enumerate()
            .map(|(i, e)| {
                <[u32; 2]>::try_from(e.as_slice()).map_err(|_| ModelError::Compile {
                    qubit: i as u32,
                    component: kind,
                    detail: format!("link spin {} is not shared by exactly two qubits", i),
                })
            })
            .collect()
    };

    Ok(InteractionTable {
        n_qubits,
        n_x,
        n_y,
        couplings,
        triangles: triangles.iter().map(|t| t.qubits).collect(),
        tri_of_qubit,
        x_endpoints: pairs(x_by_gen, "x-link")?,
        y_endpoints: pairs(y_by_gen, "y-link")?,
    })
}

/// Single-qubit error drawn from the depolarizing channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorOp {
    I,
    X,
    Y,
    Z,
}

impl ErrorOp {
    pub fn symbol(self) -> char {
        match self {
            ErrorOp::I => 'I',
            ErrorOp::X => 'X',
            ErrorOp::Y => 'Y',
            ErrorOp::Z => 'Z',
        }
    }

    fn pauli(self) -> Option<Pauli> {
        match self {
            ErrorOp::I => None,
            ErrorOp::X => Some(Pauli::X),
            ErrorOp::Y => Some(Pauli::Y),
            ErrorOp::Z => Some(Pauli::Z),
        }
    }
}

/// Quenched coupling signs derived from one sampled error pattern.
///
/// `tau^w_j = -1` exactly when the sampled error on qubit `j` anticommutes
/// with `sigma^w`, so `tau^x tau^y tau^z = +1` holds at every site.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderRealization {
    pub p: f64,
    pub seed: Seed,
    pub errors: Vec<ErrorOp>,
    /// Bit = 1 means `tau = -1`; indexed `[w][word]` with `w` in x, y, z.
    tau_neg: [Vec<u64>; 3],
}

impl DisorderRealization {
    pub fn n_qubits(&self) -> u32 {
        self.errors.len() as u32
    }

    /// 0 or 1; 1 encodes a negative coupling.
    #[inline]
    pub fn tau_bit(&self, w: usize, qubit: u32) -> u64 {
        (self.tau_neg[w][(qubit / 64) as usize] >> (qubit % 64)) & 1
    }

    pub fn tau(&self, w: usize, qubit: u32) -> i8 {
        1 - 2 * self.tau_bit(w, qubit) as i8
    }

    /// Replay serialization: probability bits, seed and per-site labels.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        writeln!(s, "tsc-disorder v1").unwrap();
        writeln!(s, "p {} bits {:016x}", self.p, self.p.to_bits()).unwrap();
        writeln!(s, "seed {}", hex(&self.seed)).unwrap();
        let labels: String = self.errors.iter().map(|e| e.symbol()).collect();
        writeln!(s, "errors {}", labels).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ModelError> {
        let mut lines = text.lines();
        let bad = |m: &str| ModelError::Parse(m.to_string());
        if lines.next() != Some("tsc-disorder v1") {
            return Err(bad("missing header"));
        }
        let pline = lines.next().ok_or_else(|| bad("missing p line"))?;
        let bits = pline
            .split_whitespace()
            .nth(3)
            .ok_or_else(|| bad("missing p bits"))?;
        let p = f64::from_bits(
            u64::from_str_radix(bits, 16).map_err(|e| bad(&format!("p bits: {e}")))?,
        );
        let sline = lines.next().ok_or_else(|| bad("missing seed line"))?;
        let seed_hex = sline
            .split_whitespace()
            .nth(1)
            .ok_or_else(|| bad("missing seed"))?;
        let seed = unhex(seed_hex).ok_or_else(|| bad("seed not 32 bytes of hex"))?;
        let eline = lines.next().ok_or_else(|| bad("missing errors line"))?;
        let labels = eline
            .split_whitespace()
            .nth(1)
            .ok_or_else(|| bad("missing labels"))?;
        let errors: Result<Vec<ErrorOp>, ModelError> = labels
            .chars()
            .map(|c| match c {
                'I' => Ok(ErrorOp::I),
                'X' => Ok(ErrorOp::X),
                'Y' => Ok(ErrorOp::Y),
                'Z' => Ok(ErrorOp::Z),
                other => Err(bad(&format!("bad error label {other:?}"))),
            })
            .collect();
        Ok(Self::from_errors(p, seed, errors?))
    }

    /// Build the tau tables from explicit labels.
    pub fn from_errors(p: f64, seed: Seed, errors: Vec<ErrorOp>) -> Self {
        let words = errors.len().div_ceil(64).max(1);
        let mut tau_neg = [vec![0u64; words], vec![0u64; words], vec![0u64; words]];
        for (j, e) in errors.iter().enumerate() {
            // tau^w = -1 iff the error anticommutes with sigma^w; derived
            // through the same symplectic algebra the compiler uses.
            if let Some(ep) = e.pauli() {
                let err = PauliString::single(1, 0, ep);
                for (w, sw) in Pauli::ALL.iter().enumerate() {
                    if err.anticommutes(&PauliString::single(1, 0, *sw)) {
                        tau_neg[w][j / 64] |= 1 << (j % 64);
                    }
                }
            }
        }
        Self {
            p,
            seed,
            errors,
            tau_neg,
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<Seed> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        out[i] = u8::from_str_radix(std::str::from_utf8(chunk).ok()?, 16).ok()?;
    }
    Some(out)
}

/// Draw one depolarizing error pattern: identity with probability `1 - p`,
/// otherwise a uniform choice among X, Y, Z.
pub fn sample_disorder(
    lat: &Lattice,
    p: f64,
    seed: Seed,
) -> Result<DisorderRealization, ModelError> {
    sample_disorder_n(lat.n_qubits(), p, seed)
}

pub fn sample_disorder_n(
    n_qubits: u32,
    p: f64,
    seed: Seed,
) -> Result<DisorderRealization, ModelError> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(ModelError::Probability(p));
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    let errors = (0..n_qubits)
        .map(|_| {
            let r: f64 = rng.gen();
            if r >= p {
                ErrorOp::I
            } else {
                match (3.0 * r / p) as u32 {
                    0 => ErrorOp::X,
                    1 => ErrorOp::Y,
                    _ => ErrorOp::Z,
                }
            }
        })
        .collect();
    Ok(DisorderRealization::from_errors(p, seed, errors))
}

#[inline]
pub(crate) fn sign_from_parity(parity: u64) -> i64 {
    1 - 2 * (parity & 1) as i64
}

/// Total energy in units of `J`; exact integer.
pub fn energy(
    table: &InteractionTable,
    disorder: &DisorderRealization,
    state: &SpinState,
) -> Result<i64, ModelError> {
    if disorder.n_qubits() != table.n_qubits {
        return Err(ModelError::Dimension(format!(
            "disorder covers {} qubits, table {}",
            disorder.n_qubits(),
            table.n_qubits
        )));
    }
    if state.n_x() != table.n_x
        || state.n_y() != table.n_y
        || state.n_triangles() != table.n_triangles()
    {
        return Err(ModelError::Dimension(format!(
            "state ({}, {}, {} triangles) vs table ({}, {}, {} triangles)",
            state.n_x(),
            state.n_y(),
            state.n_triangles(),
            table.n_x,
            table.n_y,
            table.n_triangles()
        )));
    }
    for (t, &p) in state.patterns().iter().enumerate() {
        if p > 3 {
            return Err(ModelError::InvalidPattern {
                triangle: t as u32,
                pattern: p,
            });
        }
    }
    Ok(energy_unchecked(table, disorder, state))
}

pub(crate) fn energy_unchecked(
    table: &InteractionTable,
    disorder: &DisorderRealization,
    state: &SpinState,
) -> i64 {
    let mut e = 0i64;
    for j in 0..table.n_qubits {
        let c = table.couplings[j as usize];
        let (tri, corner) = table.tri_of_qubit[j as usize];
        let sx = state.y_bit(c.y_gen); // spin coupling to tau^x
        let sy = state.x_bit(c.x_gen); // spin coupling to tau^y
        let szz = state.zz_bit(tri, corner);
        e -= sign_from_parity(disorder.tau_bit(0, j) ^ sx ^ szz);
        e -= sign_from_parity(disorder.tau_bit(1, j) ^ sy ^ szz);
        e -= sign_from_parity(disorder.tau_bit(2, j) ^ sx ^ sy);
    }
    e
}

/// Temperature on the Nishimori line: `4 beta J = ln[(1 - p) / (p / 3)]`.
pub fn nishimori_temperature(p: f64) -> Result<f64, ModelError> {
    if !(p > 0.0 && p < 0.75) {
        return Err(ModelError::NishimoriDomain(p));
    }
    Ok(4.0 / (3.0 * (1.0 - p) / p).ln())
}

/// Inverse of [`nishimori_temperature`]: the error rate whose Nishimori
/// temperature is `t`.
pub fn nishimori_p(t: f64) -> Result<f64, ModelError> {
    if !(t.is_finite() && t > 0.0) {
        return Err(ModelError::TemperatureDomain(t));
    }
    Ok(3.0 / (3.0 + (4.0 / t).exp()))
}

/// A point on the Nishimori line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NishimoriPoint {
    pub p: f64,
    pub t: f64,
    pub beta: f64,
}

impl NishimoriPoint {
    pub fn from_p(p: f64) -> Result<Self, ModelError> {
        let t = nishimori_temperature(p)?;
        Ok(Self {
            p,
            t,
            beta: 1.0 / t,
        })
    }
}

/// Exact Boltzmann averages over all constraint-satisfying states.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactThermal {
    pub e_mean: f64,
    /// Per color: mean sublattice magnetization.
    pub m_mean: [f64; 3],
    /// Per color: mean squared sublattice magnetization.
    pub m2_mean: [f64; 3],
    /// Per color: susceptibility at k = 0 (equals `N_P <m^2>`).
    pub chi0: [f64; 3],
    /// Per color: susceptibility at the smallest nonzero wave vector.
    pub chik: [f64; 3],
}

/// Exhaustive thermal oracle. Refuses instances above
/// [`ENUMERATION_BOUND`] free spins.
pub fn enumerate_thermal(
    table: &InteractionTable,
    registry: &SpinRegistry,
    disorder: &DisorderRealization,
    beta: f64,
) -> Result<ExactThermal, ModelError> {
    let free = table.free_spins();
    if free > ENUMERATION_BOUND {
        return Err(ModelError::TooLarge {
            free,
            bound: ENUMERATION_BOUND,
        });
    }
    if disorder.n_qubits() != table.n_qubits {
        return Err(ModelError::Dimension("disorder size".into()));
    }

    let n_link = (table.n_x + table.n_y) as usize;
    let n_tri = table.n_triangles() as usize;
    let n_spins = registry.total_spins();
    let class_size = spins_per_class(registry)?;

    // Per-spin phase factors for k_min = 2 pi / period along x.
    let kx = std::f64::consts::TAU / registry.period as f64;
    let phases: Vec<(f64, f64)> = registry
        .positions
        .iter()
        .map(|p| {
            let theta = kx * p[0] as f64;
            (theta.cos(), theta.sin())
        })
        .collect();

    let mut z_sum = 0.0f64;
    let mut e_acc = 0.0f64;
    let mut m_acc = [0.0f64; 3];
    let mut m2_acc = [0.0f64; 3];
    let mut f0_acc = [0.0f64; 3];
    let mut fk_acc = [0.0f64; 3];

    // E >= -3n bounds every weight by 1 after shifting.
    let e_floor = -3.0 * table.n_qubits as f64;

    let mut state = SpinState::all_up(table.n_x, table.n_y, table.n_triangles());
    for link_bits in 0..(1u64 << n_link) {
        for i in 0..table.n_x {
            state.set_x_bit(i, (link_bits >> i) & 1);
        }
        for i in 0..table.n_y {
            state.set_y_bit(i, (link_bits >> (table.n_x + i)) & 1);
        }
        for pat_code in 0..4u64.pow(n_tri as u32) {
            let mut c = pat_code;
            for t in 0..n_tri {
                state.set_pattern(t as u32, (c & 3) as u8);
                c >>= 2;
            }
            let e = energy_unchecked(table, disorder, &state);
            let w = ((e_floor - e as f64) * beta).exp();
            z_sum += w;
            e_acc += w * e as f64;

            let mut m_sum = [0i64; 3];
            let mut f_re = [0.0f64; 3];
            let mut f_im = [0.0f64; 3];
            for s in 0..n_spins {
                let sign = state.spin_sign(s, table);
                let color = registry.colors[s as usize].index();
                m_sum[color] += sign;
                let (pc, ps) = phases[s as usize];
                f_re[color] += sign as f64 * pc;
                f_im[color] += sign as f64 * ps;
            }
            for color in 0..3 {
                let m = m_sum[color] as f64 / class_size as f64;
                m_acc[color] += w * m;
                m2_acc[color] += w * m * m;
                f0_acc[color] += w * (m_sum[color] * m_sum[color]) as f64;
                fk_acc[color] += w * (f_re[color] * f_re[color] + f_im[color] * f_im[color]);
            }
        }
    }

    let np = class_size as f64;
    Ok(ExactThermal {
        e_mean: e_acc / z_sum,
        m_mean: m_acc.map(|v| v / z_sum),
        m2_mean: m2_acc.map(|v| v / z_sum),
        chi0: f0_acc.map(|v| v / z_sum / np),
        chik: fk_acc.map(|v| v / z_sum / np),
    })
}

pub(crate) fn spins_per_class(registry: &SpinRegistry) -> Result<u32, ModelError> {
    let mut sizes = [0u32; 3];
    for c in &registry.colors {
        sizes[c.index()] += 1;
    }
    if sizes[0] != sizes[1] || sizes[1] != sizes[2] {
        return Err(ModelError::Dimension(format!(
            "unequal sublattice sizes {sizes:?}"
        )));
    }
    Ok(sizes[0])
}

/// Comparison of energy multisets before and after gauge fixing.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeReport {
    /// Degeneracy multiplier applied to the gauge-fixed spectrum.
    pub factor: u64,
    pub n_levels: usize,
    pub equal: bool,
    /// First differing level: `(energy, count_original, count_fixed x factor)`.
    pub first_mismatch: Option<(i64, u64, u64)>,
}

/// Residual gauge orbit size removed by the zz substitution: one binary
/// triad flip per triangle.
pub fn degeneracy_factor(n_triangles: u32) -> u128 {
    1u128 << n_triangles
}

/// Check that the spin model before gauge fixing (one spin per generator,
/// three- and two-spin couplings) and the constrained two-spin model after
/// it have identical energy multisets up to the triad degeneracy factor.
pub fn verify_gauge_fixing(
    n_qubits: u32,
    generators: &[GaugeGenerator],
    triangles: &[Triangle],
    disorder: &DisorderRealization,
) -> Result<GaugeReport, ModelError> {
    let n_gens = generators.len();
    let n_tri = triangles.len() as u32;
    if n_gens as u32 > ENUMERATION_BOUND {
        return Err(ModelError::TooLarge {
            free: n_gens as u32,
            bound: ENUMERATION_BOUND,
        });
    }
    if disorder.n_qubits() != n_qubits {
        return Err(ModelError::Dimension("disorder size".into()));
    }

    // Original form: every generator carries an unconstrained spin and each
    // Pauli component couples to all generators it anticommutes with.
    let raw = raw_terms(n_qubits, generators);
    let mut original: HashMap<i64, u64> = HashMap::new();
    for bits in 0..(1u64 << n_gens) {
        let mut e = 0i64;
        for (j, terms) in raw.iter().enumerate() {
            for (w, term) in terms.iter().enumerate() {
                let mut parity = disorder.tau_bit(w, j as u32);
                for &g in term {
                    parity ^= (bits >> g) & 1;
                }
                e -= sign_from_parity(parity);
            }
        }
        *original.entry(e).or_insert(0) += 1;
    }

    // Gauge-fixed form through the shared compiler.
    let table = compile_from_gauge(n_qubits, generators, triangles)?;
    let mut fixed: HashMap<i64, u64> = HashMap::new();
    let n_link = (table.n_x + table.n_y) as usize;
    let mut state = SpinState::all_up(table.n_x, table.n_y, n_tri);
    for link_bits in 0..(1u64 << n_link) {
        for i in 0..table.n_x {
            state.set_x_bit(i, (link_bits >> i) & 1);
        }
        for i in 0..table.n_y {
            state.set_y_bit(i, (link_bits >> (table.n_x + i)) & 1);
        }
        for pat_code in 0..4u64.pow(n_tri) {
            let mut c = pat_code;
            for t in 0..n_tri {
                state.set_pattern(t, (c & 3) as u8);
                c >>= 2;
            }
            let e = energy_unchecked(&table, disorder, &state);
            *fixed.entry(e).or_insert(0) += 1;
        }
    }

    let factor = degeneracy_factor(n_tri) as u64;
    let mut levels: Vec<i64> = original.keys().chain(fixed.keys()).copied().collect();
    levels.sort_unstable();
    levels.dedup();
    let mut first_mismatch = None;
    for &e in &levels {
        let a = original.get(&e).copied().unwrap_or(0);
        let b = fixed.get(&e).copied().unwrap_or(0) * factor;
        if a != b {
            first_mismatch = Some((e, a, b));
            break;
        }
    }
    Ok(GaugeReport {
        factor,
        n_levels: levels.len(),
        equal: first_mismatch.is_none(),
        first_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, Color, LatticeSpec};
    use crate::rng::derive_seed;

    fn seed(k: u64) -> Seed {
        derive_seed("model-test", k, &[])
    }

    #[test]
    fn every_qubit_compiles_to_three_couplings() {
        let lat = build_lattice(LatticeSpec::new(3).unwrap()).unwrap();
        let table = compile_interactions(&lat).unwrap();
        assert_eq!(table.n_terms(), 3 * lat.n_qubits());
        assert_eq!(table.couplings.len() as u32, lat.n_qubits());
        assert_eq!(table.n_x, lat.registry.n_x);
        assert_eq!(table.n_y, lat.registry.n_y);
    }

    #[test]
    fn compiled_pairing_matches_registry_naming() {
        // tau^x couples to the Y-kind generator spin and vice versa.
        let lat = build_lattice(LatticeSpec::new(3).unwrap()).unwrap();
        let table = compile_interactions(&lat).unwrap();
        for j in 0..lat.n_qubits() {
            let c = table.couplings[j as usize];
            assert_eq!(c.x_gen, lat.registry.x_gen_of_qubit[j as usize]);
            assert_eq!(c.y_gen, lat.registry.y_gen_of_qubit[j as usize]);
            let spins = lat.registry.qubit_spins(j);
            assert_eq!(spins.sx, lat.registry.y_spin(c.y_gen));
            assert_eq!(spins.sy, lat.registry.x_spin(c.x_gen));
        }
    }

    #[test]
    fn missing_generator_fails_compilation_naming_the_qubit() {
        let lat = build_lattice(LatticeSpec::new(3).unwrap()).unwrap();
        let victim = lat.registry.x_gen_of_qubit[7];
        let endpoints: Vec<u32> = lat
            .generators
            .iter()
            .find(|g| matches!(g.kind, GeneratorKind::X) && g.kind_index == victim)
            .unwrap()
            .qubits
            .to_vec();
        let generators: Vec<GaugeGenerator> = lat
            .generators
            .iter()
            .filter(|g| !(matches!(g.kind, GeneratorKind::X) && g.kind_index == victim))
            .cloned()
            .collect();
        let err = compile_from_gauge(lat.n_qubits(), &generators, &lat.triangles).unwrap_err();
        match err {
            ModelError::Compile { qubit, .. } => {
                assert!(
                    endpoints.contains(&qubit),
                    "error names qubit {qubit}, expected an endpoint of X generator {victim}"
                );
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn disorder_p_zero_is_all_positive() {
        let lat = build_lattice(LatticeSpec::new(3).unwrap()).unwrap();
        let d = sample_disorder(&lat, 0.0, seed(1)).unwrap();
        for j in 0..lat.n_qubits() {
            assert_eq!((d.tau(0, j), d.tau(1, j), d.tau(2, j)), (1, 1, 1));
        }
    }

    #[test]
    fn disorder_respects_tau_product_constraint() {
        let lat = build_lattice(LatticeSpec::new(6).unwrap()).unwrap();
        for k in 0..20u64 {
            let p = (0.05 * (k as f64 % 16.0)).min(1.0);
            let d = sample_disorder(&lat, p, seed(k)).unwrap();
            for j in 0..lat.n_qubits() {
                assert_eq!(d.tau(0, j) as i32 * d.tau(1, j) as i32 * d.tau(2, j) as i32, 1);
            }
        }
    }

    #[test]
    fn error_labels_map_to_expected_tau_patterns() {
        let d = DisorderRealization::from_errors(
            0.5,
            seed(0),
            vec![ErrorOp::I, ErrorOp::X, ErrorOp::Y, ErrorOp::Z],
        );
        let pattern = |j: u32| (d.tau(0, j), d.tau(1, j), d.tau(2, j));
        assert_eq!(pattern(0), (1, 1, 1));
        assert_eq!(pattern(1), (1, -1, -1));
        assert_eq!(pattern(2), (-1, 1, -1));
        assert_eq!(pattern(3), (-1, -1, 1));
    }

    #[test]
    fn disorder_at_three_quarters_is_uniform() {
        let d = sample_disorder_n(200_000, 0.75, seed(2)).unwrap();
        let mut counts = [0u32; 4];
        for e in &d.errors {
            counts[*e as usize] += 1;
        }
        // Each label ~ Binomial(n, 1/4); 5 sigma band.
        let n = d.errors.len() as f64;
        let sigma = (n * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n * 0.25).abs() < 5.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn disorder_frequencies_match_channel_at_p006() {
        // 10^6 qubits at p = 0.06: identity within 5 sigma of 0.94, each
        // error within 5 sigma of 0.02.
        let n = 1_000_000u32;
        let d = sample_disorder_n(n, 0.06, seed(3)).unwrap();
        let mut counts = [0u64; 4];
        for e in &d.errors {
            counts[*e as usize] += 1;
        }
        let nf = n as f64;
        let check = |count: u64, q: f64| {
            let sigma = (nf * q * (1.0 - q)).sqrt();
            assert!(
                (count as f64 - nf * q).abs() < 5.0 * sigma,
                "count {count} vs expected {}",
                nf * q
            );
        };
        check(counts[0], 0.94);
        check(counts[1], 0.02);
        check(counts[2], 0.02);
        check(counts[3], 0.02);
    }

    #[test]
    fn disorder_is_deterministic_and_replayable() {
        let d1 = sample_disorder_n(500, 0.3, seed(9)).unwrap();
        let d2 = sample_disorder_n(500, 0.3, seed(9)).unwrap();
        assert_eq!(d1, d2);
        let d3 = DisorderRealization::from_text(&d1.to_text()).unwrap();
        assert_eq!(d1, d3);
    }

    #[test]
    fn rejects_bad_probability() {
        assert!(matches!(
            sample_disorder_n(4, -0.1, seed(0)),
            Err(ModelError::Probability(_))
        ));
        assert!(matches!(
            sample_disorder_n(4, 1.5, seed(0)),
            Err(ModelError::Probability(_))
        ));
    }

    #[test]
    fn all_up_energy_is_minus_three_n() {
        let lat = build_lattice(LatticeSpec::new(3).unwrap()).unwrap();
        let table = compile_interactions(&lat).unwrap();
        let d = sample_disorder(&lat, 0.0, seed(4)).unwrap();
        let state = SpinState::all_up(table.n_x, table.n_y, table.n_triangles());
        assert_eq!(
            energy(&table, &d, &state).unwrap(),
            -3 * lat.n_qubits() as i64
        );
    }

    /// Independent transcription of the gauge-fixed energy formula, written
    /// directly from the two-spin form using the registry's spin naming.
    fn transcribed_energy(
        lat: &Lattice,
        disorder: &DisorderRealization,
        spin_sign: impl Fn(u32) -> i64,
    ) -> i64 {
        let mut e = 0i64;
        for j in 0..lat.n_qubits() {
            let s = lat.registry.qubit_spins(j);
            let (sx, sy, szz) = (spin_sign(s.sx), spin_sign(s.sy), spin_sign(s.szz));
            e -= disorder.tau(0, j) as i64 * sx * szz;
            e -= disorder.tau(1, j) as i64 * sy * szz;
            e -= disorder.tau(2, j) as i64 * sx * sy;
        }
        e
    }

    #[test]
    fn energy_matches_independent_transcription() {
        let lat = build_lattice(LatticeSpec::new(3).unwrap()).unwrap();
        let table = compile_interactions(&lat).unwrap();
        let mut rng = ChaCha8Rng::from_seed(seed(5));
        for trial in 0..50u64 {
            let p = [0.0, 0.05, 0.2, 0.75][(trial % 4) as usize];
            let d = sample_disorder(&lat, p, seed(100 + trial)).unwrap();
            let state = SpinState::random(table.n_x, table.n_y, table.n_triangles(), &mut rng);
            let direct = energy(&table, &d, &state).unwrap();
            let oracle = transcribed_energy(&lat, &d, |spin| state.spin_sign(spin, &table));
            assert_eq!(direct, oracle, "trial {trial}");
        }
    }

    #[test]
    fn two_sublattice_flip_preserves_energy() {
        let lat = build_lattice(LatticeSpec::new(3).unwrap()).unwrap();
        let table = compile_interactions(&lat).unwrap();
        let mut rng = ChaCha8Rng::from_seed(seed(6));
        for trial in 0..100u64 {
            let p: f64 = rng.gen_range(0.0..0.8);
            let d = sample_disorder(&lat, p, seed(200 + trial)).unwrap();
            let state = SpinState::random(table.n_x, table.n_y, table.n_triangles(), &mut rng);
            let e0 = energy(&table, &d, &state).unwrap();
            for pair in [
                [Color::A, Color::B],
                [Color::B, Color::C],
                [Color::A, Color::C],
            ] {
                let flipped = state.with_classes_flipped(&lat.registry, &table, pair);
                assert_eq!(energy(&table, &d, &flipped).unwrap(), e0, "trial {trial}");
            }
        }
    }

    #[test]
    fn nishimori_values_and_domain() {
        // Closed-form evaluations frozen at high precision.
        assert!((nishimori_temperature(0.055).unwrap() - 1.014593910970205).abs() < 1e-14);
        assert!((nishimori_temperature(0.048).unwrap() - 0.9789581960405702).abs() < 1e-14);
        // p -> 0+ drives T -> 0+.
        assert!(nishimori_temperature(1e-12).unwrap() < 0.15);
        assert!(matches!(
            nishimori_temperature(0.0),
            Err(ModelError::NishimoriDomain(_))
        ));
        assert!(matches!(
            nishimori_temperature(0.75),
            Err(ModelError::NishimoriDomain(_))
        ));
    }

    #[test]
    fn nishimori_involution() {
        for &p in &[1e-6, 0.01, 0.048, 0.055, 0.3, 0.7] {
            let t = nishimori_temperature(p).unwrap();
            assert!((nishimori_p(t).unwrap() - p).abs() < 1e-12, "p = {p}");
            let pt = NishimoriPoint::from_p(p).unwrap();
            assert!((4.0 * pt.beta - ((1.0 - p) / (p / 3.0)).ln()).abs() < 1e-12);
        }
    }
}
