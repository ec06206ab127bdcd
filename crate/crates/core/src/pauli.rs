//! Pauli strings in the symplectic (binary) representation.
//!
//! A string is stored as two bit vectors; qubit `q` carries X iff `x[q]` is
//! set, Z iff `z[q]` is set, Y iff both. Phases are irrelevant here: only
//! commutation parity enters the interaction compiler.

/// Single-qubit Pauli label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    fn bits(self) -> (bool, bool) {
        match self {
            Pauli::X => (true, false),
            Pauli::Y => (true, true),
            Pauli::Z => (false, true),
        }
    }
}

/// An n-qubit Pauli operator modulo phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauliString {
    n: usize,
    x: Vec<u64>,
    z: Vec<u64>,
}

fn words(n: usize) -> usize {
    n.div_ceil(64)
}

impl PauliString {
    pub fn identity(n: usize) -> Self {
        Self {
            n,
            x: vec![0; words(n)],
            z: vec![0; words(n)],
        }
    }

    /// The single-qubit operator `sigma^w` on `qubit`.
    pub fn single(n: usize, qubit: usize, w: Pauli) -> Self {
        let mut s = Self::identity(n);
        s.set(qubit, Some(w));
        s
    }

    /// `sigma^w (x) sigma^w` acting on a pair of qubits.
    pub fn two_body(n: usize, pair: (usize, usize), w: Pauli) -> Self {
        let mut s = Self::identity(n);
        s.set(pair.0, Some(w));
        s.set(pair.1, Some(w));
        s
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn set(&mut self, qubit: usize, p: Option<Pauli>) {
        assert!(qubit < self.n, "qubit index out of range");
        let (w, b) = (qubit / 64, 1u64 << (qubit % 64));
        self.x[w] &= !b;
        self.z[w] &= !b;
        if let Some(p) = p {
            let (xb, zb) = p.bits();
            if xb {
                self.x[w] |= b;
            }
            if zb {
                self.z[w] |= b;
            }
        }
    }

    pub fn get(&self, qubit: usize) -> Option<Pauli> {
        let (w, b) = (qubit / 64, 1u64 << (qubit % 64));
        match (self.x[w] & b != 0, self.z[w] & b != 0) {
            (false, false) => None,
            (true, false) => Some(Pauli::X),
            (true, true) => Some(Pauli::Y),
            (false, true) => Some(Pauli::Z),
        }
    }

    /// Commutation parity via the symplectic form:
    /// the strings anticommute iff `x·z' + z·x'` is odd.
    pub fn anticommutes(&self, other: &Self) -> bool {
        assert_eq!(self.n, other.n, "pauli strings of unequal length");
        let mut parity = 0u32;
        for i in 0..self.x.len() {
            parity ^= (self.x[i] & other.z[i]).count_ones() & 1;
            parity ^= (self.z[i] & other.x[i]).count_ones() & 1;
        }
        parity & 1 == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    type Mat = Vec<Vec<Complex64>>;

    fn pauli_matrix(p: Option<Pauli>) -> Mat {
        let o = Complex64::new(0.0, 0.0);
        let l = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        match p {
            None => vec![vec![l, o], vec![o, l]],
            Some(Pauli::X) => vec![vec![o, l], vec![l, o]],
            Some(Pauli::Y) => vec![vec![o, -i], vec![i, o]],
            Some(Pauli::Z) => vec![vec![l, o], vec![o, -l]],
        }
    }

    fn kron(a: &Mat, b: &Mat) -> Mat {
        let (ra, ca, rb, cb) = (a.len(), a[0].len(), b.len(), b[0].len());
        let mut m = vec![vec![Complex64::new(0.0, 0.0); ca * cb]; ra * rb];
        for ia in 0..ra {
            for ja in 0..ca {
                for ib in 0..rb {
                    for jb in 0..cb {
                        m[ia * rb + ib][ja * cb + jb] = a[ia][ja] * b[ib][jb];
                    }
                }
            }
        }
        m
    }

    fn matmul(a: &Mat, b: &Mat) -> Mat {
        let n = a.len();
        let mut m = vec![vec![Complex64::new(0.0, 0.0); n]; n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    m[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        m
    }

    fn string_matrix(s: &PauliString) -> Mat {
        let mut m = pauli_matrix(s.get(0));
        for q in 1..s.len() {
            m = kron(&m, &pauli_matrix(s.get(q)));
        }
        m
    }

    fn anticommute_matrices(a: &Mat, b: &Mat) -> bool {
        let ab = matmul(a, b);
        let ba = matmul(b, a);
        let mut anti = true;
        let mut comm = true;
        for i in 0..ab.len() {
            for j in 0..ab.len() {
                if (ab[i][j] + ba[i][j]).norm() > 1e-12 {
                    anti = false;
                }
                if (ab[i][j] - ba[i][j]).norm() > 1e-12 {
                    comm = false;
                }
            }
        }
        assert!(anti != comm, "pauli pair neither commutes nor anticommutes");
        anti
    }

    fn all_strings(n: usize) -> Vec<PauliString> {
        let mut out = Vec::new();
        let choices = [None, Some(Pauli::X), Some(Pauli::Y), Some(Pauli::Z)];
        for code in 0..4usize.pow(n as u32) {
            let mut s = PauliString::identity(n);
            let mut c = code;
            for q in 0..n {
                s.set(q, choices[c % 4]);
                c /= 4;
            }
            out.push(s);
        }
        out
    }

    #[test]
    fn symplectic_matches_matrix_algebra_on_three_qubits() {
        // All 64 three-qubit strings against each other.
        let strings = all_strings(3);
        let mats: Vec<Mat> = strings.iter().map(string_matrix).collect();
        for (i, a) in strings.iter().enumerate() {
            for (j, b) in strings.iter().enumerate() {
                assert_eq!(
                    a.anticommutes(b),
                    anticommute_matrices(&mats[i], &mats[j]),
                    "mismatch for pair ({i}, {j})"
                );
            }
        }
    }

    #[test]
    fn single_qubit_rules() {
        let x = PauliString::single(2, 0, Pauli::X);
        let z0 = PauliString::single(2, 0, Pauli::Z);
        let z1 = PauliString::single(2, 1, Pauli::Z);
        assert!(x.anticommutes(&z0));
        assert!(!x.anticommutes(&z1));
        assert!(!x.anticommutes(&x));
    }

    #[test]
    fn two_body_generator_commutation() {
        // sigma^x_0 against sigma^y (x) sigma^y on (0, 1): anticommutes once.
        let g = PauliString::two_body(3, (0, 1), Pauli::Y);
        assert!(PauliString::single(3, 0, Pauli::X).anticommutes(&g));
        assert!(!PauliString::single(3, 0, Pauli::Y).anticommutes(&g));
        assert!(!PauliString::single(3, 2, Pauli::X).anticommutes(&g));
        // Overlapping on both members anticommutes twice, hence commutes.
        let xx = PauliString::two_body(3, (0, 1), Pauli::X);
        assert!(!xx.anticommutes(&g));
    }
}
