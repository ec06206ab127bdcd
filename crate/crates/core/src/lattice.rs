//! Periodic triangular-lattice gauge structure for the subsystem color code.
//!
//! Geometry conventions (frozen; the canonical serialization and all spin
//! positions depend on them):
//!
//! - Vertices `v(i, j)` of the triangular lattice sit at lattice coordinates
//!   `(i, j)`, `0 <= i, j < L`, with basis vectors `e1 = (1, 0)` and
//!   `e2 = (1/2, sqrt(3)/2)` when Cartesian distances are needed. Vertex
//!   colors are `(i + 2j) mod 3 -> {A, B, C}`; periodic consistency of this
//!   coloring is what forces `L mod 3 == 0`.
//! - Each cell `(i, j)` carries an up face `U(i,j)` with corners
//!   `v(i,j), v(i+1,j), v(i,j+1)` and a down face `D(i,j)` with corners
//!   `v(i+1,j), v(i,j+1), v(i+1,j+1)`. Every face hosts one triangle of
//!   three qubits, one per corner, pulled halfway toward the face centroid.
//! - The three qubits of a face are joined pairwise by Z gauge generators.
//!   Around every vertex the six nearest qubits (one per incident face) form
//!   a hexagon whose edges carry X and Y gauge generators in alternation, so
//!   each qubit touches exactly two Z, one X and one Y generator.
//! - One Ising spin per X generator, one per Y generator, and one
//!   constrained `zz` spin per qubit. Spins are colored by their nearest
//!   vertex, which is always the center of their hexagon.
//! - All positions are stored as integer numerators over 12 (lattice units),
//!   reduced into `[0, 12 L)`, so serialization is exact.
//!
//! Identifiers are assigned in row-major cell order with a fixed intra-cell
//! order, so two builds from the same spec are byte-identical.

use thiserror::Error;

/// Position denominator: all coordinates are integer multiples of 1/12.
pub const POS_DENOM: i64 = 12;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("L = {0} violates `L >= 3` (smallest consistent periodic lattice)")]
    TooSmall(u32),
    #[error("L = {0} violates `L mod 3 == 0` (three-coloring is inconsistent under periodic wrap)")]
    NotColorable(u32),
    #[error("construction self-check failed: {0}")]
    SelfCheck(String),
}

/// Sublattice color; every spin belongs to exactly one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Color {
    A,
    B,
    C,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::A, Color::B, Color::C];

    pub fn index(self) -> usize {
        match self {
            Color::A => 0,
            Color::B => 1,
            Color::C => 2,
        }
    }

    fn from_residue(r: i64) -> Color {
        match r.rem_euclid(3) {
            0 => Color::A,
            1 => Color::B,
            _ => Color::C,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::A => "A",
            Color::B => "B",
            Color::C => "C",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    X,
    Y,
    Z,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::X => "X",
            GeneratorKind::Y => "Y",
            GeneratorKind::Z => "Z",
        }
    }
}

/// Linear system size; boundaries are always periodic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSpec {
    pub l: u32,
}

impl LatticeSpec {
    pub fn new(l: u32) -> Result<Self, LatticeError> {
        if l < 3 {
            return Err(LatticeError::TooSmall(l));
        }
        if l % 3 != 0 {
            return Err(LatticeError::NotColorable(l));
        }
        Ok(Self { l })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QubitSite {
    pub id: u32,
    /// Face (= triangle) hosting this qubit.
    pub face: u32,
    /// Corner within the face, 0..3.
    pub corner: u8,
    /// Vertex of the original lattice this qubit is nearest to.
    pub vertex: u32,
    /// Position numerators over [`POS_DENOM`], reduced into `[0, 12 L)`.
    pub pos: [i64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaugeGenerator {
    /// Index within its kind (X, Y and Z generators are numbered separately).
    pub kind_index: u32,
    pub kind: GeneratorKind,
    pub qubits: [u32; 2],
    pub pos: [i64; 2],
    pub color: Color,
}

/// One qubit triangle: three qubits joined by three Z generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub id: u32,
    pub qubits: [u32; 3],
    /// Flat indices into `Lattice::generators` (Z generators come first).
    pub z_gens: [u32; 3],
    pub color: Color,
}

/// Per-qubit spin indices as they enter the simulated two-spin Hamiltonian.
///
/// `sx` names the link spin multiplying `tau^x` for this qubit and `sy` the
/// one multiplying `tau^y`. A single-qubit sigma^x error anticommutes with
/// the qubit's Y-kind generator (and both Z kinds), so `sx` is the Y-link
/// spin; the interaction compiler re-derives this pairing from commutation
/// rather than trusting the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QubitSpins {
    pub sx: u32,
    pub sy: u32,
    pub szz: u32,
}

/// Registry of all Ising spins: one per X generator, one per Y generator,
/// one constrained zz spin per qubit.
///
/// Global spin ids are laid out as `[0, n_x)` X-link spins (same index as
/// their generator), `[n_x, n_x + n_y)` Y-link spins, then zz spins in qubit
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinRegistry {
    pub n_x: u32,
    pub n_y: u32,
    pub n_zz: u32,
    /// X-kind generator index per qubit.
    pub x_gen_of_qubit: Vec<u32>,
    /// Y-kind generator index per qubit.
    pub y_gen_of_qubit: Vec<u32>,
    /// Color per global spin id.
    pub colors: Vec<Color>,
    /// Position numerators (over [`POS_DENOM`]) per global spin id.
    pub positions: Vec<[i64; 2]>,
    /// Spatial period of the numerators (`12 L`).
    pub period: i64,
    /// zz constraint groups, one triple of global zz spin ids per triangle.
    pub groups: Vec<[u32; 3]>,
}

impl SpinRegistry {
    pub fn total_spins(&self) -> u32 {
        self.n_x + self.n_y + self.n_zz
    }

    pub fn x_spin(&self, gen: u32) -> u32 {
        gen
    }

    pub fn y_spin(&self, gen: u32) -> u32 {
        self.n_x + gen
    }

    pub fn zz_spin(&self, qubit: u32) -> u32 {
        self.n_x + self.n_y + qubit
    }

    /// The spin triple `(sx, sy, szz)` of one qubit in the gauge-fixed
    /// Hamiltonian (see [`QubitSpins`] for the naming rule).
    pub fn qubit_spins(&self, qubit: u32) -> QubitSpins {
        QubitSpins {
            sx: self.y_spin(self.y_gen_of_qubit[qubit as usize]),
            sy: self.x_spin(self.x_gen_of_qubit[qubit as usize]),
            szz: self.zz_spin(qubit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    pub spec: LatticeSpec,
    pub qubits: Vec<QubitSite>,
    /// All gauge generators: Z first (3 per face), then X, then Y
    /// (3 per vertex each).
    pub generators: Vec<GaugeGenerator>,
    pub triangles: Vec<Triangle>,
    pub registry: SpinRegistry,
}

/// One violated invariant, reported as data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub constraint: &'static str,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.constraint, self.detail)
    }
}

impl Lattice {
    pub fn n_qubits(&self) -> u32 {
        self.qubits.len() as u32
    }

    pub fn n_triangles(&self) -> u32 {
        self.triangles.len() as u32
    }

    pub fn l(&self) -> u32 {
        self.spec.l
    }

    pub fn z_generators(&self) -> &[GaugeGenerator] {
        &self.generators[..self.triangles.len() * 3]
    }

    /// Sublattice cardinality (`|P|`), identical for all three colors.
    pub fn sublattice_size(&self) -> u32 {
        self.registry.total_spins() / 3
    }
}

/// Relative qubit positions (numerators over 12) of the six faces around a
/// vertex, in counterclockwise order starting from the up face whose first
/// corner is the vertex itself.
const HEX_QUBIT_REL: [[i64; 2]; 6] = [
    [2, 2],   // U(i, j)   corner 0
    [-2, 4],  // D(i-1, j) corner 0
    [-4, 2],  // U(i-1, j) corner 1
    [-2, -2], // D(i-1, j-1) corner 2
    [2, -4],  // U(i, j-1) corner 2
    [4, -2],  // D(i, j-1) corner 1
];

/// Hexagon edges carrying X generators: pairs of positions in the ring above.
const HEX_X_EDGES: [[usize; 2]; 3] = [[0, 1], [2, 3], [4, 5]];
/// Hexagon edges carrying Y generators.
const HEX_Y_EDGES: [[usize; 2]; 3] = [[5, 0], [1, 2], [3, 4]];

/// Offsets of the three qubits inside an up face, numerators over 12.
const UP_QUBIT_OFFSETS: [[i64; 2]; 3] = [[2, 2], [8, 2], [2, 8]];
/// Offsets inside a down face.
const DOWN_QUBIT_OFFSETS: [[i64; 2]; 3] = [[10, 4], [4, 10], [10, 10]];

/// Construct the lattice for a given spec. Deterministic: identical specs
/// produce byte-identical canonical serializations.
pub fn build_lattice(spec: LatticeSpec) -> Result<Lattice, LatticeError> {
    // Re-validate: specs can be built literal.
    let spec = LatticeSpec::new(spec.l)?;
    let l = spec.l as i64;
    let n_cells = (l * l) as u32;
    let n_faces = 2 * n_cells;
    let n_qubits = 3 * n_faces;
    let period = POS_DENOM * l;

    let cell = |i: i64, j: i64| -> u32 { (j.rem_euclid(l) * l + i.rem_euclid(l)) as u32 };
    let vertex = cell;
    let vertex_color = |i: i64, j: i64| Color::from_residue(i + 2 * j);
    let up_face = |i: i64, j: i64| 2 * cell(i, j);
    let down_face = |i: i64, j: i64| 2 * cell(i, j) + 1;
    let qubit_of = |face: u32, corner: u8| 3 * face + corner as u32;
    let wrap = |x: i64| x.rem_euclid(period);

    let mut qubits = Vec::with_capacity(n_qubits as usize);
    for j in 0..l {
        for i in 0..l {
            // Up face, then down face; corners in the fixed order
            // documented above.
            let corner_vertices_up = [vertex(i, j), vertex(i + 1, j), vertex(i, j + 1)];
            let corner_vertices_down = [vertex(i + 1, j), vertex(i, j + 1), vertex(i + 1, j + 1)];
            for (face, offsets, verts) in [
                (up_face(i, j), &UP_QUBIT_OFFSETS, corner_vertices_up),
                (down_face(i, j), &DOWN_QUBIT_OFFSETS, corner_vertices_down),
            ] {
                for corner in 0..3u8 {
                    let off = offsets[corner as usize];
                    qubits.push(QubitSite {
                        id: qubit_of(face, corner),
                        face,
                        corner,
                        vertex: verts[corner as usize],
                        pos: [
                            wrap(POS_DENOM * i + off[0]),
                            wrap(POS_DENOM * j + off[1]),
                        ],
                    });
                }
            }
        }
    }
    // Re-order: the loop above pushed in face order already, but qubit ids
    // must equal vector indices.
    qubits.sort_by_key(|q| q.id);

    let mut generators = Vec::with_capacity((3 * n_faces + 6 * n_cells) as usize);

    // Z generators: 3 per face, edge e joins corners e and e+1; colored by
    // the vertex at the opposite corner (the unique corner not on the edge).
    let mut triangles = Vec::with_capacity(n_faces as usize);
    for j in 0..l {
        for i in 0..l {
            let corner_vertices_up = [vertex(i, j), vertex(i + 1, j), vertex(i, j + 1)];
            let corner_vertices_down = [vertex(i + 1, j), vertex(i, j + 1), vertex(i + 1, j + 1)];
            for (face, verts, tri_color) in [
                (up_face(i, j), corner_vertices_up, Color::from_residue(j)),
                (down_face(i, j), corner_vertices_down, Color::from_residue(j + 2)),
            ] {
                let mut z_ids = [0u32; 3];
                for e in 0..3u8 {
                    let a = qubit_of(face, e);
                    let b = qubit_of(face, (e + 1) % 3);
                    let (pa, pb) = (qubits[a as usize].pos, qubits[b as usize].pos);
                    let opposite = verts[((e + 2) % 3) as usize];
                    let kind_index = 3 * face + e as u32;
                    z_ids[e as usize] = kind_index;
                    generators.push(GaugeGenerator {
                        kind_index,
                        kind: GeneratorKind::Z,
                        qubits: [a, b],
                        // Same face: no wrap between the two endpoints.
                        pos: [(pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2],
                        color: color_of_vertex(opposite, l),
                    });
                }
                triangles.push(Triangle {
                    id: face,
                    qubits: [qubit_of(face, 0), qubit_of(face, 1), qubit_of(face, 2)],
                    z_gens: z_ids,
                    color: tri_color,
                });
            }
        }
    }

    // X and Y generators: the hexagon around each vertex, in the frozen
    // counterclockwise face order. Link midpoints are computed unwrapped
    // relative to the vertex and reduced afterwards, so links that cross the
    // periodic seam get geometrically sensible positions.
    let n_link = 3 * n_cells;
    let mut x_gens = Vec::with_capacity(n_link as usize);
    let mut y_gens = Vec::with_capacity(n_link as usize);
    let mut x_gen_of_qubit = vec![u32::MAX; n_qubits as usize];
    let mut y_gen_of_qubit = vec![u32::MAX; n_qubits as usize];
    for j in 0..l {
        for i in 0..l {
            let color = vertex_color(i, j);
            let ring = [
                qubit_of(up_face(i, j), 0),
                qubit_of(down_face(i - 1, j), 0),
                qubit_of(up_face(i - 1, j), 1),
                qubit_of(down_face(i - 1, j - 1), 2),
                qubit_of(up_face(i, j - 1), 2),
                qubit_of(down_face(i, j - 1), 1),
            ];
            let base = [POS_DENOM * i, POS_DENOM * j];
            let place = |edges: &[[usize; 2]; 3],
                             kind: GeneratorKind,
                             gens: &mut Vec<GaugeGenerator>,
                             gen_of_qubit: &mut Vec<u32>| {
                for edge in edges {
                    let (qa, qb) = (ring[edge[0]], ring[edge[1]]);
                    let (ra, rb) = (HEX_QUBIT_REL[edge[0]], HEX_QUBIT_REL[edge[1]]);
                    let kind_index = gens.len() as u32;
                    gens.push(GaugeGenerator {
                        kind_index,
                        kind,
                        qubits: [qa, qb],
                        pos: [
                            wrap(base[0] + (ra[0] + rb[0]) / 2),
                            wrap(base[1] + (ra[1] + rb[1]) / 2),
                        ],
                        color,
                    });
                    for q in [qa, qb] {
                        debug_assert_eq!(gen_of_qubit[q as usize], u32::MAX);
                        gen_of_qubit[q as usize] = kind_index;
                    }
                }
            };
            place(&HEX_X_EDGES, GeneratorKind::X, &mut x_gens, &mut x_gen_of_qubit);
            place(&HEX_Y_EDGES, GeneratorKind::Y, &mut y_gens, &mut y_gen_of_qubit);
        }
    }
    generators.extend(x_gens.iter().cloned());
    generators.extend(y_gens.iter().cloned());

    // Spin registry: colors and positions in global spin order.
    let mut colors = Vec::with_capacity((n_link * 2 + n_qubits) as usize);
    let mut positions = Vec::with_capacity(colors.capacity());
    for g in &x_gens {
        colors.push(g.color);
        positions.push(g.pos);
    }
    for g in &y_gens {
        colors.push(g.color);
        positions.push(g.pos);
    }
    for q in &qubits {
        colors.push(color_of_vertex(q.vertex, l));
        positions.push(q.pos);
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

    let lat = Lattice {
        spec,
        qubits,
        generators,
        triangles,
        registry,
    };

    let violations = validate_lattice(&lat);
    if let Some(v) = violations.first() {
        return Err(LatticeError::SelfCheck(format!(
            "{} ({} violations total)",
            v,
            violations.len()
        )));
    }
    Ok(lat)
}

fn color_of_vertex(vertex: u32, l: i64) -> Color {
    let (i, j) = ((vertex as i64) % l, (vertex as i64) / l);
    Color::from_residue(i + 2 * j)
}

/// Check every structural invariant; an empty list means the lattice is
/// well formed. Violations are data, not errors.
pub fn validate_lattice(lat: &Lattice) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = lat.qubits.len();
    let reg = &lat.registry;

    if n != 3 * lat.triangles.len() {
        out.push(Violation {
            constraint: "qubit count equals three per triangle",
            detail: format!("{} qubits vs {} triangles", n, lat.triangles.len()),
        });
    }

    // Incidence by kind, rebuilt from the generator table alone.
    let mut incident: Vec<Vec<(GeneratorKind, u32)>> = vec![Vec::new(); n];
    for g in &lat.generators {
        for q in g.qubits {
            if (q as usize) < n {
                incident[q as usize].push((g.kind, g.kind_index));
            } else {
                out.push(Violation {
                    constraint: "generator references existing qubits",
                    detail: format!("{} generator {} -> qubit {}", g.kind.name(), g.kind_index, q),
                });
            }
        }
    }
    for (q, inc) in incident.iter().enumerate() {
        let mut counts = [0u32; 3];
        for (kind, _) in inc {
            counts[match kind {
                GeneratorKind::X => 0,
                GeneratorKind::Y => 1,
                GeneratorKind::Z => 2,
            }] += 1;
        }
        if counts != [1, 1, 2] {
            out.push(Violation {
                constraint: "qubit degree is {Z, Z, X, Y}",
                detail: format!(
                    "qubit {} touches {} X, {} Y, {} Z generators",
                    q, counts[0], counts[1], counts[2]
                ),
            });
        }
    }

    // Z generators stay inside one triangle; X/Y generators bridge two.
    let face_of = |q: u32| lat.qubits.get(q as usize).map(|s| s.face);
    for g in &lat.generators {
        let (fa, fb) = (face_of(g.qubits[0]), face_of(g.qubits[1]));
        let (Some(fa), Some(fb)) = (fa, fb) else { continue };
        match g.kind {
            GeneratorKind::Z if fa != fb => out.push(Violation {
                constraint: "Z generator spans two triangles",
                detail: format!("Z generator {} joins faces {} and {}", g.kind_index, fa, fb),
            }),
            GeneratorKind::X | GeneratorKind::Y if fa == fb => out.push(Violation {
                constraint: "X/Y generator must join distinct triangles",
                detail: format!("{} generator {} stays in face {}", g.kind.name(), g.kind_index, fa),
            }),
            _ => {}
        }
    }

    // Adjacent triangles (sharing an X or Y generator) carry different colors.
    for g in &lat.generators {
        if matches!(g.kind, GeneratorKind::Z) {
            continue;
        }
        let (Some(fa), Some(fb)) = (face_of(g.qubits[0]), face_of(g.qubits[1])) else {
            continue;
        };
        if fa == fb {
            continue;
        }
        let (ca, cb) = (lat.triangles[fa as usize].color, lat.triangles[fb as usize].color);
        if ca == cb {
            out.push(Violation {
                constraint: "adjacent triangles share color",
                detail: format!(
                    "triangles {} and {} both {} via {} generator {}",
                    fa,
                    fb,
                    ca.name(),
                    g.kind.name(),
                    g.kind_index
                ),
            });
        }
    }

    // Spin counts.
    if reg.n_x != reg.n_y || 2 * reg.n_x != n as u32 {
        out.push(Violation {
            constraint: "link spin counts equal n/2 each",
            detail: format!("n_x = {}, n_y = {}, n = {}", reg.n_x, reg.n_y, n),
        });
    }
    if reg.n_zz != n as u32 {
        out.push(Violation {
            constraint: "one zz spin per qubit",
            detail: format!("n_zz = {}, n = {}", reg.n_zz, n),
        });
    }
    if reg.colors.len() != reg.total_spins() as usize
        || reg.positions.len() != reg.colors.len()
    {
        out.push(Violation {
            constraint: "registry tables cover every spin",
            detail: format!(
                "{} spins, {} colors, {} positions",
                reg.total_spins(),
                reg.colors.len(),
                reg.positions.len()
            ),
        });
    }

    // Constraint groups partition the zz spins into triangle triples.
    let mut seen = vec![false; reg.n_zz as usize];
    if reg.groups.len() != lat.triangles.len() {
        out.push(Violation {
            constraint: "one constraint group per triangle",
            detail: format!("{} groups, {} triangles", reg.groups.len(), lat.triangles.len()),
        });
    }
    for (t, group) in reg.groups.iter().enumerate() {
        for &s in group {
            let q = s.wrapping_sub(reg.n_x + reg.n_y) as usize;
            if q >= seen.len() {
                out.push(Violation {
                    constraint: "constraint group references zz spins",
                    detail: format!("group {} -> spin {}", t, s),
                });
            } else if std::mem::replace(&mut seen[q], true) {
                out.push(Violation {
                    constraint: "constraint groups are disjoint",
                    detail: format!("zz spin of qubit {} appears twice", q),
                });
            }
        }
        if let Some(tri) = lat.triangles.get(t) {
            let mut want = tri.qubits.map(|q| reg.zz_spin(q));
            let mut got = *group;
            want.sort_unstable();
            got.sort_unstable();
            if want != got {
                out.push(Violation {
                    constraint: "constraint group matches its triangle",
                    detail: format!("triangle {}: group {:?} vs qubits {:?}", t, group, tri.qubits),
                });
            }
        }
    }
    if let Some(q) = seen.iter().position(|s| !s) {
        out.push(Violation {
            constraint: "constraint groups cover every zz spin",
            detail: format!("zz spin of qubit {} unassigned", q),
        });
    }

    // Each link spin is referenced by exactly the two qubits its generator
    // connects.
    let mut x_refs: Vec<Vec<u32>> = vec![Vec::new(); reg.n_x as usize];
    let mut y_refs: Vec<Vec<u32>> = vec![Vec::new(); reg.n_y as usize];
    for q in 0..n {
        if let Some(r) = x_refs.get_mut(reg.x_gen_of_qubit[q] as usize) {
            r.push(q as u32);
        }
        if let Some(r) = y_refs.get_mut(reg.y_gen_of_qubit[q] as usize) {
            r.push(q as u32);
        }
    }
    for g in &lat.generators {
        let refs = match g.kind {
            GeneratorKind::X => &x_refs,
            GeneratorKind::Y => &y_refs,
            GeneratorKind::Z => continue,
        };
        let mut got = refs[g.kind_index as usize].clone();
        let mut want = g.qubits.to_vec();
        got.sort_unstable();
        want.sort_unstable();
        if got != want {
            out.push(Violation {
                constraint: "link spin referenced exactly by its generator's qubits",
                detail: format!(
                    "{} generator {}: referenced by {:?}, connects {:?}",
                    g.kind.name(),
                    g.kind_index,
                    got,
                    want
                ),
            });
        }
    }

    // Equal sublattice sizes.
    let mut class_sizes = [0u32; 3];
    for c in &reg.colors {
        class_sizes[c.index()] += 1;
    }
    if class_sizes[0] != class_sizes[1] || class_sizes[1] != class_sizes[2] {
        out.push(Violation {
            constraint: "sublattice sizes |A| = |B| = |C|",
            detail: format!("{:?}", class_sizes),
        });
    }

    out
}

/// All global spin ids belonging to one color class. Classes partition the
/// registry and have equal cardinality.
pub fn sublattice_members(lat: &Lattice, color: Color) -> Vec<u32> {
    lat.registry
        .colors
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == color)
        .map(|(i, _)| i as u32)
        .collect()
}

/// Canonical versioned text serialization. Two builds from the same spec
/// serialize byte-identically; checkpoints embed this text to detect layout
/// drift.
pub fn canonical_text(lat: &Lattice) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let reg = &lat.registry;
    writeln!(s, "tsc-lattice v1").unwrap();
    writeln!(s, "L {} boundary periodic", lat.spec.l).unwrap();
    writeln!(
        s,
        "counts qubits {} triangles {} x {} y {} zz {} denom {} period {}",
        lat.qubits.len(),
        lat.triangles.len(),
        reg.n_x,
        reg.n_y,
        reg.n_zz,
        POS_DENOM,
        reg.period
    )
    .unwrap();
    for q in &lat.qubits {
        writeln!(
            s,
            "q {} face {} corner {} vertex {} pos {} {}",
            q.id, q.face, q.corner, q.vertex, q.pos[0], q.pos[1]
        )
        .unwrap();
    }
    for g in &lat.generators {
        writeln!(
            s,
            "g {} {} qubits {} {} pos {} {} color {}",
            g.kind.name(),
            g.kind_index,
            g.qubits[0],
            g.qubits[1],
            g.pos[0],
            g.pos[1],
            g.color.name()
        )
        .unwrap();
    }
    for t in &lat.triangles {
        writeln!(
            s,
            "t {} qubits {} {} {} zgens {} {} {} color {}",
            t.id,
            t.qubits[0],
            t.qubits[1],
            t.qubits[2],
            t.z_gens[0],
            t.z_gens[1],
            t.z_gens[2],
            t.color.name()
        )
        .unwrap();
    }
    for spin in 0..reg.total_spins() {
        let p = reg.positions[spin as usize];
        writeln!(
            s,
            "s {} color {} pos {} {}",
            spin,
            reg.colors[spin as usize].name(),
            p[0],
            p[1]
        )
        .unwrap();
    }
    for q in 0..lat.qubits.len() {
        writeln!(
            s,
            "ql {} xgen {} ygen {}",
            q, reg.x_gen_of_qubit[q], reg.y_gen_of_qubit[q]
        )
        .unwrap();
    }
    writeln!(s, "end").unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_sizes() {
        assert_eq!(LatticeSpec::new(2), Err(LatticeError::TooSmall(2)));
        assert_eq!(LatticeSpec::new(4), Err(LatticeError::NotColorable(4)));
        assert_eq!(LatticeSpec::new(10), Err(LatticeError::NotColorable(10)));
        assert!(LatticeSpec::new(3).is_ok());
        assert!(LatticeSpec::new(9).is_ok());
    }

    #[test]
    fn smallest_lattice_counts() {
        // L = 3 with triangles on both face orientations: 18 triangles,
        // 54 qubits, 54 Z generators, 54 zz spins in 18 constraint groups,
        // and integral link counts 27 + 27.
        let lat = build_lattice(LatticeSpec::new(3).unwrap()).unwrap();
        assert_eq!(lat.n_triangles(), 18);
        assert_eq!(lat.n_qubits(), 54);
        assert_eq!(lat.z_generators().len(), 54);
        assert_eq!(lat.registry.n_zz, 54);
        assert_eq!(lat.registry.groups.len(), 18);
        assert_eq!(lat.registry.n_x, 27);
        assert_eq!(lat.registry.n_y, 27);
        assert_eq!(lat.registry.total_spins(), 108);
    }

    #[test]
    fn odd_l_has_integral_link_counts() {
        // Table-scale sizes include odd L; pairing across faces must stay
        // integral there.
        let lat = build_lattice(LatticeSpec::new(9).unwrap()).unwrap();
        assert_eq!(lat.n_qubits(), 486);
        assert_eq!(lat.registry.n_x, 243);
        assert_eq!(lat.registry.n_y, 243);
    }

    #[test]
    fn valid_lattice_validates_clean() {
        for l in [3, 6, 9] {
            let lat = build_lattice(LatticeSpec::new(l).unwrap()).unwrap();
            assert!(validate_lattice(&lat).is_empty(), "L = {l}");
        }
    }

    #[test]
    fn retargeted_z_generator_is_reported() {
        let mut lat = build_lattice(LatticeSpec::new(6).unwrap()).unwrap();
        // Point a Z generator at a qubit from another face.
        lat.generators[0].qubits[1] = lat.triangles[5].qubits[0];
        let violations = validate_lattice(&lat);
        assert!(violations
            .iter()
            .any(|v| v.constraint == "Z generator spans two triangles"));
    }

    #[test]
    fn recolored_triangle_is_reported() {
        let mut lat = build_lattice(LatticeSpec::new(6).unwrap()).unwrap();
        let neighbor_color = {
            // Find a triangle adjacent to triangle 0 via a link generator.
            let g = lat
                .generators
                .iter()
                .find(|g| {
                    !matches!(g.kind, GeneratorKind::Z)
                        && g.qubits.iter().any(|&q| lat.qubits[q as usize].face == 0)
                })
                .unwrap();
            let other = g
                .qubits
                .iter()
                .map(|&q| lat.qubits[q as usize].face)
                .find(|&f| f != 0)
                .unwrap();
            lat.triangles[other as usize].color
        };
        lat.triangles[0].color = neighbor_color;
        let violations = validate_lattice(&lat);
        assert!(violations
            .iter()
            .any(|v| v.constraint == "adjacent triangles share color"));
    }

    #[test]
    fn sublattices_partition_evenly() {
        let lat = build_lattice(LatticeSpec::new(6).unwrap()).unwrap();
        let (a, b, c) = (
            sublattice_members(&lat, Color::A),
            sublattice_members(&lat, Color::B),
            sublattice_members(&lat, Color::C),
        );
        assert_eq!(a.len(), b.len());
        assert_eq!(b.len(), c.len());
        assert_eq!(
            a.len() + b.len() + c.len(),
            lat.registry.total_spins() as usize
        );
        let mut all: Vec<u32> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        assert!(all.iter().enumerate().all(|(i, &s)| i as u32 == s));
        assert_eq!(a.len() as u32, lat.sublattice_size());
    }

    #[test]
    fn relabeling_swaps_memberships_exactly() {
        // Swapping the color labels A and B must swap the member sets: the
        // classes are defined by geometry, not by enumeration order.
        let lat = build_lattice(LatticeSpec::new(6).unwrap()).unwrap();
        let mut relabeled = lat.clone();
        for c in relabeled.registry.colors.iter_mut() {
            *c = match *c {
                Color::A => Color::B,
                Color::B => Color::A,
                Color::C => Color::C,
            };
        }
        assert_eq!(
            sublattice_members(&lat, Color::A),
            sublattice_members(&relabeled, Color::B)
        );
        assert_eq!(
            sublattice_members(&lat, Color::B),
            sublattice_members(&relabeled, Color::A)
        );
        assert_eq!(
            sublattice_members(&lat, Color::C),
            sublattice_members(&relabeled, Color::C)
        );
    }

    #[test]
    fn spins_are_nearest_their_own_vertex() {
        // Brute force in the true triangular geometry with periodic images.
        let lat = build_lattice(LatticeSpec::new(6).unwrap()).unwrap();
        let l = lat.spec.l as f64;
        let to_cartesian = |x: f64, y: f64| -> (f64, f64) { (x + 0.5 * y, y * 3f64.sqrt() / 2.0) };
        let reg = &lat.registry;
        for spin in 0..reg.total_spins() as usize {
            let p = reg.positions[spin];
            let (px, py) = (p[0] as f64 / POS_DENOM as f64, p[1] as f64 / POS_DENOM as f64);
            let mut best = (f64::INFINITY, Color::A);
            for vj in 0..lat.spec.l as i64 {
                for vi in 0..lat.spec.l as i64 {
                    let color = Color::from_residue(vi + 2 * vj);
                    for im_i in [-1.0, 0.0, 1.0] {
                        for im_j in [-1.0, 0.0, 1.0] {
                            let (dx, dy) =
                                (px - vi as f64 - im_i * l, py - vj as f64 - im_j * l);
                            let (cx, cy) = to_cartesian(dx, dy);
                            let d = cx * cx + cy * cy;
                            if d < best.0 - 1e-12 {
                                best = (d, color);
                            }
                        }
                    }
                }
            }
            assert_eq!(best.1, reg.colors[spin], "spin {spin}");
        }
    }

    #[test]
    fn builds_are_byte_identical() {
        let a = canonical_text(&build_lattice(LatticeSpec::new(6).unwrap()).unwrap());
        let b = canonical_text(&build_lattice(LatticeSpec::new(6).unwrap()).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with("tsc-lattice v1\n"));
    }
}
