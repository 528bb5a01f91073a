//! Three spin-1/2 Hilbert space.
//!
//! Product basis ordering is site 1 ⊗ site 2 ⊗ site 3 with single-site basis
//! {↑, ↓}; the product index is `4*s1 + 2*s2 + s3` where `s = 0` means ↑.
//!
//! The coupled basis couples sites 1 and 3 first and then site 2, using
//! Condon-Shortley phases. Its column order is fixed:
//!
//! | column | S13 | S   | mS   | role        |
//! |--------|-----|-----|------|-------------|
//! | 0      | 0   | 1/2 | +1/2 | `|0⟩`, gauge + |
//! | 1      | 0   | 1/2 | −1/2 | `|0⟩`, gauge − |
//! | 2      | 1   | 1/2 | +1/2 | `|1⟩`, gauge + |
//! | 3      | 1   | 1/2 | −1/2 | `|1⟩`, gauge − |
//! | 4..8   | 1   | 3/2 | +3/2 … −3/2 | leakage |

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat8 = SMatrix<C64, 8, 8>;
pub type Vec8 = SVector<C64, 8>;

pub const DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    fn index(self) -> usize {
        self as usize
    }
}

/// Site and total spin operators in the product basis.
#[derive(Debug, Clone)]
pub struct SpinOperatorSet {
    site: [[Mat8; 3]; 3],
    total: [Mat8; 3],
    total_sq: Mat8,
    s13_sq: Mat8,
}

impl SpinOperatorSet {
    /// Operator `S_i^a` for site `i ∈ {1, 2, 3}`.
    pub fn site(&self, i: usize, axis: Axis) -> &Mat8 {
        assert!((1..=3).contains(&i), "site index {i} out of range 1..=3");
        &self.site[i - 1][axis.index()]
    }

    pub fn total(&self, axis: Axis) -> &Mat8 {
        &self.total[axis.index()]
    }

    /// Total spin squared `S²`.
    pub fn total_sq(&self) -> &Mat8 {
        &self.total_sq
    }

    /// Squared total spin of sites 1 and 3.
    pub fn s13_sq(&self) -> &Mat8 {
        &self.s13_sq
    }

    /// `S_i · S_j`.
    pub fn dot(&self, i: usize, j: usize) -> Mat8 {
        Axis::ALL
            .iter()
            .map(|&a| self.site(i, a) * self.site(j, a))
            .fold(Mat8::zeros(), |acc, m| acc + m)
    }

    /// Process-wide shared instance (the operators are immutable).
    pub fn shared() -> &'static SpinOperatorSet {
        static OPS: OnceLock<SpinOperatorSet> = OnceLock::new();
        OPS.get_or_init(build_spin_operators)
    }
}

fn single_site(axis: Axis) -> [[C64; 2]; 2] {
    let h = 0.5;
    let z = C64::new(0.0, 0.0);
    match axis {
        Axis::X => [[z, C64::new(h, 0.0)], [C64::new(h, 0.0), z]],
        Axis::Y => [[z, C64::new(0.0, -h)], [C64::new(0.0, h), z]],
        Axis::Z => [[C64::new(h, 0.0), z], [z, C64::new(-h, 0.0)]],
    }
}

fn site_bit(index: usize, site: usize) -> usize {
    (index >> (3 - site)) & 1
}

fn embed(site: usize, op: [[C64; 2]; 2]) -> Mat8 {
    Mat8::from_fn(|r, c| {
        let others_equal = (1..=3)
            .filter(|&k| k != site)
            .all(|k| site_bit(r, k) == site_bit(c, k));
        if others_equal {
            op[site_bit(r, site)][site_bit(c, site)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

pub fn build_spin_operators() -> SpinOperatorSet {
    let site = [1, 2, 3].map(|i| Axis::ALL.map(|a| embed(i, single_site(a))));
    let total = Axis::ALL.map(|a| site[0][a.index()] + site[1][a.index()] + site[2][a.index()]);
    let total_sq = total.iter().fold(Mat8::zeros(), |acc, s| acc + s * s);
    let s13_sq = Axis::ALL.iter().fold(Mat8::zeros(), |acc, &a| {
        let s = site[0][a.index()] + site[2][a.index()];
        acc + s * s
    });
    SpinOperatorSet {
        site,
        total,
        total_sq,
        s13_sq,
    }
}

fn factorial(n: i32) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Clebsch-Gordan coefficient `⟨j1 m1; j2 m2 | j m⟩` with every argument
/// given as twice its value (so half-integers are integers). Racah formula,
/// Condon-Shortley phase.
pub fn clebsch_gordan(j1: i32, m1: i32, j2: i32, m2: i32, j: i32, m: i32) -> f64 {
    if m1 + m2 != m || m1.abs() > j1 || m2.abs() > j2 || m.abs() > j {
        return 0.0;
    }
    if j < (j1 - j2).abs() || j > j1 + j2 || (j1 + j2 + j) % 2 != 0 {
        return 0.0;
    }
    if (j1 + m1) % 2 != 0 || (j2 + m2) % 2 != 0 || (j + m) % 2 != 0 {
        return 0.0;
    }
    let h = |x: i32| x / 2;
    let pre = ((j + 1) as f64 * factorial(h(j1 + j2 - j)) * factorial(h(j1 - j2 + j))
        * factorial(h(-j1 + j2 + j))
        / factorial(h(j1 + j2 + j) + 1))
    .sqrt();
    let norm = (factorial(h(j1 + m1))
        * factorial(h(j1 - m1))
        * factorial(h(j2 + m2))
        * factorial(h(j2 - m2))
        * factorial(h(j + m))
        * factorial(h(j - m)))
    .sqrt();
    let mut sum = 0.0;
    for k in 0..=h(j1 + j2 - j) {
        let terms = [
            k,
            h(j1 + j2 - j) - k,
            h(j1 - m1) - k,
            h(j2 + m2) - k,
            h(j - j2 + m1) + k,
            h(j - j1 - m2) + k,
        ];
        if terms.iter().any(|&t| t < 0) {
            continue;
        }
        let denom: f64 = terms.iter().map(|&t| factorial(t)).product();
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    pre * norm * sum
}

/// Quantum numbers of one coupled-basis column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct BasisLabel {
    pub s13: u8,
    /// Twice the total spin.
    pub s_x2: u8,
    /// Twice the z projection.
    pub ms_x2: i8,
}

impl BasisLabel {
    pub fn s(&self) -> f64 {
        self.s_x2 as f64 / 2.0
    }

    pub fn ms(&self) -> f64 {
        self.ms_x2 as f64 / 2.0
    }

    pub fn is_leakage(&self) -> bool {
        self.s_x2 == 3
    }
}

pub const BASIS_LABELS: [BasisLabel; 8] = [
    BasisLabel { s13: 0, s_x2: 1, ms_x2: 1 },
    BasisLabel { s13: 0, s_x2: 1, ms_x2: -1 },
    BasisLabel { s13: 1, s_x2: 1, ms_x2: 1 },
    BasisLabel { s13: 1, s_x2: 1, ms_x2: -1 },
    BasisLabel { s13: 1, s_x2: 3, ms_x2: 3 },
    BasisLabel { s13: 1, s_x2: 3, ms_x2: 1 },
    BasisLabel { s13: 1, s_x2: 3, ms_x2: -1 },
    BasisLabel { s13: 1, s_x2: 3, ms_x2: -3 },
];

/// Unitary whose columns are the coupled `|S13, S, mS⟩` states.
#[derive(Debug, Clone)]
pub struct CoupledBasis {
    matrix: Mat8,
}

impl CoupledBasis {
    pub fn matrix(&self) -> &Mat8 {
        &self.matrix
    }

    pub fn labels(&self) -> &'static [BasisLabel; 8] {
        &BASIS_LABELS
    }

    pub fn column(&self, k: usize) -> Vec8 {
        self.matrix.column(k).into_owned()
    }

    /// Express an operator given in the product basis in the coupled basis.
    pub fn to_coupled(&self, op: &Mat8) -> Mat8 {
        self.matrix.adjoint() * op * self.matrix
    }

    pub fn to_product(&self, op: &Mat8) -> Mat8 {
        self.matrix * op * self.matrix.adjoint()
    }

    pub fn shared() -> &'static CoupledBasis {
        static BASIS: OnceLock<CoupledBasis> = OnceLock::new();
        BASIS.get_or_init(|| build_coupled_basis(SpinOperatorSet::shared()))
    }
}

fn product_index(m1: i32, m2: i32, m3: i32) -> usize {
    let bit = |m: i32| if m > 0 { 0 } else { 1 };
    4 * bit(m1) + 2 * bit(m2) + bit(m3)
}

/// Builds the coupled basis by Clebsch-Gordan coupling of sites (1, 3), then
/// site 2. The operator set is only needed for the label check in debug
/// builds; the construction itself is closed-form.
pub fn build_coupled_basis(ops: &SpinOperatorSet) -> CoupledBasis {
    let mut matrix = Mat8::zeros();
    for (col, label) in BASIS_LABELS.iter().enumerate() {
        let s13_x2 = 2 * label.s13 as i32;
        let (s_x2, ms_x2) = (label.s_x2 as i32, label.ms_x2 as i32);
        for m13 in (-s13_x2..=s13_x2).step_by(2) {
            for m2 in [1, -1] {
                let outer = clebsch_gordan(s13_x2, m13, 1, m2, s_x2, ms_x2);
                if outer == 0.0 {
                    continue;
                }
                for m1 in [1, -1] {
                    let m3 = m13 - m1;
                    let inner = clebsch_gordan(1, m1, 1, m3, s13_x2, m13);
                    if inner == 0.0 {
                        continue;
                    }
                    matrix[(product_index(m1, m2, m3), col)] += C64::new(outer * inner, 0.0);
                }
            }
        }
    }
    let basis = CoupledBasis { matrix };
    debug_assert!({
        let d = basis.to_coupled(ops.total_sq());
        (0..8).all(|k| (d[(k, k)].re - BASIS_LABELS[k].s() * (BASIS_LABELS[k].s() + 1.0)).abs() < 1e-12)
    });
    basis
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ProjectorTag {
    Qubit0,
    Qubit1,
    Leakage,
    S13Singlet,
    GaugePlus,
    GaugeMinus,
}

impl ProjectorTag {
    pub const ALL: [ProjectorTag; 6] = [
        ProjectorTag::Qubit0,
        ProjectorTag::Qubit1,
        ProjectorTag::Leakage,
        ProjectorTag::S13Singlet,
        ProjectorTag::GaugePlus,
        ProjectorTag::GaugeMinus,
    ];

    fn selects(self, label: &BasisLabel) -> bool {
        match self {
            ProjectorTag::Qubit0 | ProjectorTag::S13Singlet => label.s13 == 0,
            ProjectorTag::Qubit1 => label.s13 == 1 && label.s_x2 == 1,
            ProjectorTag::Leakage => label.s_x2 == 3,
            ProjectorTag::GaugePlus => label.ms_x2 > 0,
            ProjectorTag::GaugeMinus => label.ms_x2 < 0,
        }
    }
}

impl fmt::Display for ProjectorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for ProjectorTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProjectorTag::ALL
            .into_iter()
            .find(|t| t.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownProjector(s.to_string()))
    }
}

/// Orthogonal projector onto a labelled subspace, in the product basis.
#[derive(Debug, Clone)]
pub struct Projector {
    pub tag: ProjectorTag,
    pub matrix: Mat8,
}

pub fn projector(basis: &CoupledBasis, tag: ProjectorTag) -> Projector {
    let mut matrix = Mat8::zeros();
    for (k, label) in basis.labels().iter().enumerate() {
        if tag.selects(label) {
            let v = basis.column(k);
            matrix += v * v.adjoint();
        }
    }
    Projector { tag, matrix }
}

/// Projector looked up by name; unknown names are an error.
pub fn projector_by_name(basis: &CoupledBasis, name: &str) -> Result<Projector> {
    Ok(projector(basis, name.parse()?))
}

/// Cached projectors for the shared basis, indexed by tag.
pub fn shared_projector(tag: ProjectorTag) -> &'static Mat8 {
    static CACHE: OnceLock<Vec<Mat8>> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        ProjectorTag::ALL
            .iter()
            .map(|&t| projector(CoupledBasis::shared(), t).matrix)
            .collect()
    });
    &all[tag as usize]
}

/// Ideal qubit π rotation exchanging `|0⟩ ↔ |1⟩` inside each gauge and
/// acting as the identity on the leakage quadruplet.
pub fn ideal_qubit_flip() -> &'static Mat8 {
    static FLIP: OnceLock<Mat8> = OnceLock::new();
    FLIP.get_or_init(|| {
        let basis = CoupledBasis::shared();
        let mut coupled = Mat8::zeros();
        let one = C64::new(1.0, 0.0);
        coupled[(0, 2)] = one;
        coupled[(2, 0)] = one;
        coupled[(1, 3)] = one;
        coupled[(3, 1)] = one;
        for k in 4..8 {
            coupled[(k, k)] = one;
        }
        basis.to_product(&coupled)
    })
}

/// Qubit Pauli operator lifted to the full space: it acts identically on the
/// `(|0,g⟩, |1,g⟩)` block of both gauges and vanishes on leakage.
pub fn qubit_pauli(axis: Axis) -> Mat8 {
    let basis = CoupledBasis::shared();
    let p = single_site(axis);
    let mut coupled = Mat8::zeros();
    for g in 0..2 {
        let idx = [g, g + 2];
        for r in 0..2 {
            for c in 0..2 {
                coupled[(idx[r], idx[c])] = p[r][c] * 2.0;
            }
        }
    }
    basis.to_product(&coupled)
}

pub fn commutator(a: &Mat8, b: &Mat8) -> Mat8 {
    a * b - b * a
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn eig_sorted(m: &Mat8) -> Vec<f64> {
        let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn site_operators_are_traceless_and_hermitian() {
        let ops = build_spin_operators();
        for i in 1..=3 {
            for a in Axis::ALL {
                let s = ops.site(i, a);
                assert!(s.trace().norm() < 1e-15);
                assert!((s - s.adjoint()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn angular_momentum_commutators() {
        let ops = build_spin_operators();
        let i = C64::new(0.0, 1.0);
        for k in 1..=3 {
            let c = commutator(ops.site(k, Axis::X), ops.site(k, Axis::Y));
            assert!((c - ops.site(k, Axis::Z) * i).norm() < 1e-14);
            let c = commutator(ops.site(k, Axis::Y), ops.site(k, Axis::Z));
            assert!((c - ops.site(k, Axis::X) * i).norm() < 1e-14);
        }
        for a in Axis::ALL {
            for b in Axis::ALL {
                assert!(commutator(ops.site(1, a), ops.site(3, b)).norm() < 1e-15);
                assert!(commutator(ops.site(1, a), ops.site(2, b)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn total_spin_spectra() {
        let ops = build_spin_operators();
        let s2 = eig_sorted(ops.total_sq());
        for (k, v) in s2.iter().enumerate() {
            let want = if k < 4 { 0.75 } else { 3.75 };
            assert!((v - want).abs() < 1e-12, "{s2:?}");
        }
        let s13 = eig_sorted(ops.s13_sq());
        for (k, v) in s13.iter().enumerate() {
            let want = if k < 2 { 0.0 } else { 2.0 };
            assert!((v - want).abs() < 1e-12, "{s13:?}");
        }
    }

    #[test]
    fn pair_identities() {
        let ops = build_spin_operators();
        let id = Mat8::identity();
        let lhs = ops.dot(1, 3);
        let rhs = (ops.s13_sq() - id * C64::new(1.5, 0.0)) * C64::new(0.5, 0.0);
        assert!((lhs - rhs).norm() < 1e-12);
        let sum = ops.dot(1, 2) + ops.dot(2, 3) + ops.dot(1, 3);
        let rhs = (ops.total_sq() - id * C64::new(2.25, 0.0)) * C64::new(0.5, 0.0);
        assert!((sum - rhs).norm() < 1e-12);
    }

    #[test]
    fn clebsch_gordan_known_values() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((clebsch_gordan(1, 1, 1, -1, 0, 0) - s).abs() < 1e-15);
        assert!((clebsch_gordan(1, -1, 1, 1, 0, 0) + s).abs() < 1e-15);
        assert!((clebsch_gordan(2, 2, 1, -1, 1, 1) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((clebsch_gordan(2, 0, 1, 1, 1, 1) + (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(clebsch_gordan(2, 2, 1, 1, 1, 1), 0.0);
    }

    #[test]
    fn coupled_basis_is_unitary_and_labelled() {
        let ops = build_spin_operators();
        let basis = build_coupled_basis(&ops);
        let u = basis.matrix();
        assert!((u.adjoint() * u - Mat8::identity()).norm() < 1e-12);
        for (k, label) in basis.labels().iter().enumerate() {
            let v = basis.column(k);
            let checks = [
                (ops.total_sq(), label.s() * (label.s() + 1.0)),
                (ops.s13_sq(), (label.s13 * (label.s13 + 1)) as f64),
                (ops.total(Axis::Z), label.ms()),
            ];
            for (op, val) in checks {
                let resid = op * v - v * C64::new(val, 0.0);
                assert!(resid.norm() < 1e-12, "column {k} label {label:?}");
            }
        }
    }

    #[test]
    fn gauge_plus_zero_state_is_singlet_times_up() {
        let basis = CoupledBasis::shared();
        let v = basis.column(0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut want = Vec8::zeros();
        want[product_index(1, 1, -1)] = C64::new(s, 0.0);
        want[product_index(-1, 1, 1)] = C64::new(-s, 0.0);
        let overlap = (want.adjoint() * v)[(0, 0)].norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projector_properties() {
        let ops = SpinOperatorSet::shared();
        let basis = CoupledBasis::shared();
        let dims = [2.0, 2.0, 4.0, 2.0, 4.0, 4.0];
        for (tag, dim) in ProjectorTag::ALL.into_iter().zip(dims) {
            let p = projector(basis, tag).matrix;
            assert!((p * p - p).norm() < 1e-12);
            assert!((p - p.adjoint()).norm() < 1e-12);
            assert!((p.trace().re - dim).abs() < 1e-12);
            assert!(commutator(&p, ops.total_sq()).norm() < 1e-12);
            assert!(commutator(&p, ops.total(Axis::Z)).norm() < 1e-12);
        }
        let q0 = projector(basis, ProjectorTag::Qubit0).matrix;
        let q1 = projector(basis, ProjectorTag::Qubit1).matrix;
        let l = projector(basis, ProjectorTag::Leakage).matrix;
        assert!((q0 * q1).norm() < 1e-12);
        assert!((q0 + q1 + l - Mat8::identity()).norm() < 1e-12);
        let singlet = projector(basis, ProjectorTag::S13Singlet).matrix;
        assert!((singlet - q0).norm() < 1e-12);
    }

    #[test]
    fn unknown_projector_name_is_rejected() {
        let basis = CoupledBasis::shared();
        assert!(projector_by_name(basis, "leakage").is_ok());
        assert_eq!(
            projector_by_name(basis, "Qubit2").unwrap_err(),
            Error::UnknownProjector("Qubit2".into())
        );
    }

    #[test]
    fn ideal_flip_swaps_qubit_projectors() {
        let x = ideal_qubit_flip();
        let q0 = shared_projector(ProjectorTag::Qubit0);
        let q1 = shared_projector(ProjectorTag::Qubit1);
        assert!((x * x - Mat8::identity()).norm() < 1e-12);
        assert!((x * q0 * x.adjoint() - q1).norm() < 1e-12);
    }

    // Brute-force oracle: simultaneous diagonalisation of S², S13², Sz via a
    // generic linear combination, then compare the singlet-S13 / mS=+1/2
    // eigenvector to the closed-form column 0.
    #[test]
    fn coupled_basis_matches_simultaneous_diagonalisation() {
        let ops = build_spin_operators();
        let combo = ops.total_sq() * C64::new(1.0, 0.0)
            + ops.s13_sq() * C64::new(0.37, 0.0)
            + ops.total(Axis::Z) * C64::new(0.113, 0.0);
        let dense = DMatrix::from_fn(8, 8, |r, c| combo[(r, c)]);
        let eig = dense.symmetric_eigen();
        // eigenvalue of the (S13=0, S=1/2, mS=+1/2) state: 0.75 + 0 + 0.0565
        let target = 0.75 + 0.113 * 0.5;
        let k = (0..8)
            .min_by(|&a, &b| {
                (eig.eigenvalues[a] - target)
                    .abs()
                    .partial_cmp(&(eig.eigenvalues[b] - target).abs())
                    .unwrap()
            })
            .unwrap();
        let v = eig.eigenvectors.column(k);
        let col = CoupledBasis::shared().column(0);
        let overlap: C64 = (0..8).map(|i| v[i].conj() * col[i]).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-12);
    }
}
