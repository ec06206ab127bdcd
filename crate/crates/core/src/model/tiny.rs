//! Small closed gauge structures for the exact oracles.
//!
//! A ring of `T` triangles (T even) carries the same local structure as the
//! full lattice: two Z generators, one X and one Y generator per qubit, with
//! link generators joining corner-`c` qubits of neighboring triangles. Even
//! edges of the ring carry the X generators, odd edges the Y generators, so
//! every coupling stays within one corner class and the constrained triples
//! span all three classes, reproducing the two-class flip symmetry of the
//! production lattice. With `5 T` free spins, `T = 2` (10) and `T = 4` (20)
//! sit inside the enumeration bound.

use super::{compile_from_gauge, InteractionTable, ModelError};
use crate::lattice::{Color, GaugeGenerator, GeneratorKind, SpinRegistry, Triangle, POS_DENOM};

/// A self-contained instance: gauge structure, spin registry and compiled
/// interaction table.
#[derive(Debug, Clone)]
pub struct TinySystem {
    pub n_qubits: u32,
    pub generators: Vec<GaugeGenerator>,
    pub triangles: Vec<Triangle>,
    pub registry: SpinRegistry,
    pub table: InteractionTable,
}

/// Build a periodic chain of `n_triangles` qubit triangles (even, >= 2).
pub fn triangle_ring(n_triangles: u32) -> Result<TinySystem, ModelError> {
    if n_triangles < 2 || n_triangles % 2 != 0 {
        return Err(ModelError::Dimension(format!(
            "triangle ring needs an even triangle count >= 2, got {n_triangles}"
        )));
    }
    let t_count = n_triangles;
    let n_qubits = 3 * t_count;
    let n_pairs = t_count / 2;
    let qubit = |t: u32, c: u32| 3 * (t % t_count) + c;
    let color = |c: u32| Color::ALL[c as usize];
    let period = POS_DENOM * t_count as i64;

    let mut generators = Vec::new();
    let mut triangles = Vec::new();
    for t in 0..t_count {
        let x0 = POS_DENOM * t as i64;
        let mut z_gens = [0u32; 3];
        for e in 0..3u32 {
            let kind_index = 3 * t + e;
            z_gens[e as usize] = kind_index;
            generators.push(GaugeGenerator {
                kind_index,
                kind: GeneratorKind::Z,
                qubits: [qubit(t, e), qubit(t, (e + 1) % 3)],
                pos: [x0, POS_DENOM * e as i64 + POS_DENOM / 2],
                color: color((e + 2) % 3),
            });
        }
        triangles.push(Triangle {
            id: t,
            qubits: [qubit(t, 0), qubit(t, 1), qubit(t, 2)],
            z_gens,
            color: if t % 2 == 0 { Color::A } else { Color::B },
        });
    }
    // X generators on even ring edges (2k, 2k+1), Y on odd edges
    // (2k+1, 2k+2), corner class preserved across each edge.
    for k in 0..n_pairs {
        for c in 0..3u32 {
            generators.push(GaugeGenerator {
                kind_index: 3 * k + c,
                kind: GeneratorKind::X,
                qubits: [qubit(2 * k, c), qubit(2 * k + 1, c)],
                pos: [
                    (POS_DENOM * (2 * k) as i64 + POS_DENOM / 2).rem_euclid(period),
                    POS_DENOM * c as i64,
                ],
                color: color(c),
            });
        }
    }
    for k in 0..n_pairs {
        for c in 0..3u32 {
            generators.push(GaugeGenerator {
                kind_index: 3 * k + c,
                kind: GeneratorKind::Y,
                qubits: [qubit(2 * k + 1, c), qubit(2 * k + 2, c)],
                pos: [
                    (POS_DENOM * (2 * k + 1) as i64 + POS_DENOM / 2).rem_euclid(period),
                    POS_DENOM * c as i64,
                ],
                color: color(c),
            });
        }
    }

    let n_link = 3 * n_pairs;
    let mut x_gen_of_qubit = vec![u32::MAX; n_qubits as usize];
    let mut y_gen_of_qubit = vec![u32::MAX; n_qubits as usize];
    for g in &generators {
        let target = match g.kind {
            GeneratorKind::X => &mut x_gen_of_qubit,
            GeneratorKind::Y => &mut y_gen_of_qubit,
            GeneratorKind::Z => continue,
        };
        for q in g.qubits {
            target[q as usize] = g.kind_index;
        }
    }

    let mut colors = Vec::with_capacity((2 * n_link + n_qubits) as usize);
    let mut positions = Vec::with_capacity(colors.capacity());
    for kind in [GeneratorKind::X, GeneratorKind::Y] {
        for g in generators.iter().filter(|g| g.kind == kind) {
            colors.push(g.color);
            positions.push(g.pos);
        }
    }
    for t in 0..t_count {
        for c in 0..3u32 {
            colors.push(color(c));
            positions.push([POS_DENOM * t as i64, POS_DENOM * c as i64]);
        }
    }

    let registry = SpinRegistry {
        n_x: n_link,
        n_y: n_link,
        n_zz: n_qubits,
        x_gen_of_qubit,
        y_gen_of_qubit,
        colors,
        positions,
        period,
        groups: triangles
            .iter()
            .map(|t| t.qubits.map(|q| 2 * n_link + q))
            .collect(),
    };

    let table = compile_from_gauge(n_qubits, &generators, &triangles)?;
    Ok(TinySystem {
        n_qubits,
        generators,
        triangles,
        registry,
        table,
    })
}
