//! Dense state-vector and density-matrix simulation.
//!
//! Qubit 0 is the leftmost tensor factor, i.e. the most significant bit of a
//! computational-basis index. Gate matrices acting on `targets` use the same
//! convention locally: `targets[0]` is the most significant bit of the gate's
//! row/column index.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const MAX_QUBITS: usize = 6;

const NORM_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;
const UNITARY_TOL: f64 = 1e-10;

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::Size(n));
    }
    Ok(())
}

fn check_targets(n: usize, targets: &[usize]) -> Result<()> {
    for (i, &q) in targets.iter().enumerate() {
        if q >= n {
            return Err(Error::Shape(format!("qubit {q} out of range for {n} qubits")));
        }
        if targets[..i].contains(&q) {
            return Err(Error::Shape(format!("duplicate target qubit {q}")));
        }
    }
    Ok(())
}

/// Largest elementwise deviation of `m` from being Hermitian.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest elementwise deviation of `a` from `b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Largest elementwise deviation of `a` from `b` after removing the global
/// phase that best aligns them.
pub fn max_abs_diff_up_to_phase(a: &CMatrix, b: &CMatrix) -> f64 {
    let overlap: C64 = a.iter().zip(b.iter()).map(|(x, y)| y.conj() * x).sum();
    if overlap.norm() < 1e-300 {
        return max_abs_diff(a, b);
    }
    let phase = overlap / overlap.norm();
    let aligned = b.map(|v| v * phase);
    max_abs_diff(a, &aligned)
}

/// Kronecker product with `a` as the leftmost (most significant) factor.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Eigen-decomposition of a Hermitian matrix. Eigenvalues are ascending.
pub(crate) fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (m + m.adjoint()).map(|v| v * 0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), m.ncols(), |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

/// Rebuilds `V diag(f(λ)) V†`.
pub(crate) fn spectral_map(values: &[f64], vectors: &CMatrix, f: impl Fn(f64) -> C64) -> CMatrix {
    let d = values.len();
    let mut scaled = vectors.clone();
    for k in 0..d {
        let w = f(values[k]);
        for r in 0..d {
            scaled[(r, k)] *= w;
        }
    }
    scaled * vectors.adjoint()
}

/// Principal square root of a PSD matrix; eigenvalues at rounding level are
/// treated as exact zeros.
fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let scale = values.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);
    spectral_map(&values, &vectors, |v| {
        if v <= 1e-13 * scale {
            C64::new(0.0, 0.0)
        } else {
            C64::new(v.sqrt(), 0.0)
        }
    })
}

/// Applies a `2^k × 2^k` matrix to the listed qubits of a flat vector of
/// length `2^n`, in place.
pub(crate) fn apply_matrix_to_vector(data: &mut [C64], n: usize, m: &CMatrix, targets: &[usize]) {
    let k = targets.len();
    let dim = 1usize << k;
    debug_assert_eq!(m.nrows(), dim);
    let masks: Vec<usize> = targets.iter().map(|&q| 1usize << (n - 1 - q)).collect();
    let all_mask = masks.iter().fold(0, |a, &b| a | b);

    if k == 1 {
        let (m00, m01, m10, m11) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let bit = masks[0];
        for base in 0..data.len() {
            if base & bit != 0 {
                continue;
            }
            let a0 = data[base];
            let a1 = data[base | bit];
            data[base] = m00 * a0 + m01 * a1;
            data[base | bit] = m10 * a0 + m11 * a1;
        }
        return;
    }

    let offsets: Vec<usize> = (0..dim)
        .map(|l| {
            (0..k)
                .filter(|i| (l >> (k - 1 - i)) & 1 == 1)
                .fold(0, |acc, i| acc | masks[i])
        })
        .collect();
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    for base in 0..data.len() {
        if base & all_mask != 0 {
            continue;
        }
        for (l, off) in offsets.iter().enumerate() {
            buf[l] = data[base | off];
        }
        for (r, off) in offsets.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for (col, b) in buf.iter().enumerate() {
                acc += m[(r, col)] * b;
            }
            data[base | off] = acc;
        }
    }
}

/// Computes `M ρ M†` for an operator `M` acting on `targets`.
pub(crate) fn conjugate_density(rho: &CMatrix, n: usize, m: &CMatrix, targets: &[usize]) -> CMatrix {
    let d = rho.nrows();
    let mut work = rho.clone();
    for col in work.as_mut_slice().chunks_mut(d) {
        apply_matrix_to_vector(col, n, m, targets);
    }
    // (Mρ)† = ρM†, and M(ρM†) = MρM†.
    let mut work = work.adjoint();
    for col in work.as_mut_slice().chunks_mut(d) {
        apply_matrix_to_vector(col, n, m, targets);
    }
    work
}

/// A unitary matrix on `k` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Unitary {
    matrix: CMatrix,
}

impl Unitary {
    /// Validates `U·U† = I` within 1e-10 elementwise.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let d = matrix.nrows();
        if d != matrix.ncols() || !d.is_power_of_two() || d < 2 {
            return Err(Error::Shape(format!(
                "unitary must be square with power-of-two dimension, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let defect = max_abs_diff(&(&matrix * matrix.adjoint()), &CMatrix::identity(d, d));
        if defect > UNITARY_TOL {
            return Err(Error::Argument(format!("matrix is not unitary (defect {defect:.3e})")));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn identity(n_qubits: usize) -> Self {
        let d = 1 << n_qubits;
        Self { matrix: CMatrix::identity(d, d) }
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dimension().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint() }
    }

    /// Matrix product `self · other` (other acts first).
    pub fn compose(&self, other: &Unitary) -> Result<Self> {
        if self.dimension() != other.dimension() {
            return Err(Error::Shape("cannot compose unitaries of different size".into()));
        }
        Ok(Self { matrix: &self.matrix * &other.matrix })
    }

    pub fn tensor(&self, other: &Unitary) -> Self {
        Self { matrix: kron(&self.matrix, &other.matrix) }
    }

    pub fn unitarity_defect(&self) -> f64 {
        let d = self.dimension();
        max_abs_diff(&(&self.matrix * self.matrix.adjoint()), &CMatrix::identity(d, d))
    }

    /// Embeds the gate into an `n`-qubit register at `targets`.
    pub fn embed(&self, n: usize, targets: &[usize]) -> Result<CMatrix> {
        check_qubits(n)?;
        check_targets(n, targets)?;
        if self.dimension() != 1 << targets.len() {
            return Err(Error::Shape("unitary size does not match target count".into()));
        }
        let d = 1 << n;
        let mut out = CMatrix::identity(d, d);
        for col in out.as_mut_slice().chunks_mut(d) {
            apply_matrix_to_vector(col, n, &self.matrix, targets);
        }
        Ok(out)
    }
}

/// Single-qubit Pauli letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> CMatrix {
        let (o, l, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
        match self {
            Pauli::I => CMatrix::from_row_slice(2, 2, &[l, o, o, l]),
            Pauli::X => CMatrix::from_row_slice(2, 2, &[o, l, l, o]),
            Pauli::Y => CMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
            Pauli::Z => CMatrix::from_row_slice(2, 2, &[l, o, o, -l]),
        }
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// Phase picked up by basis state `|bit⟩`: `P|b⟩ = phase · |b ⊕ flip⟩`.
    fn phase(self, bit: bool) -> C64 {
        match (self, bit) {
            (Pauli::I, _) | (Pauli::X, _) | (Pauli::Z, false) => c(1.0, 0.0),
            (Pauli::Z, true) => c(-1.0, 0.0),
            (Pauli::Y, false) => c(0.0, 1.0),
            (Pauli::Y, true) => c(0.0, -1.0),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of Pauli letters, one per qubit (qubit 0 first).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Result<Self> {
        check_qubits(letters.len())?;
        Ok(Self { letters })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(vec![Pauli::I; n])
    }

    /// `letter` on `qubit`, identity elsewhere.
    pub fn single(n: usize, qubit: usize, letter: Pauli) -> Result<Self> {
        if qubit >= n {
            return Err(Error::Shape(format!("qubit {qubit} out of range for {n} qubits")));
        }
        let mut letters = vec![Pauli::I; n];
        letters[qubit] = letter;
        Self::new(letters)
    }

    pub fn z(n: usize, qubit: usize) -> Result<Self> {
        Self::single(n, qubit, Pauli::Z)
    }

    /// The `index`-th string in lexicographic order (I<X<Y<Z, qubit 0 most
    /// significant).
    pub fn from_index(n: usize, index: usize) -> Result<Self> {
        check_qubits(n)?;
        if index >= 1 << (2 * n) {
            return Err(Error::Argument(format!("Pauli index {index} out of range")));
        }
        let letters = (0..n)
            .map(|q| Pauli::ALL[(index >> (2 * (n - 1 - q))) & 3])
            .collect();
        Ok(Self { letters })
    }

    /// All `4^n` strings in lexicographic order.
    pub fn all(n: usize) -> Result<Vec<Self>> {
        check_qubits(n)?;
        (0..1usize << (2 * n)).map(|i| Self::from_index(n, i)).collect()
    }

    pub fn n_qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn label(&self) -> String {
        self.letters.iter().map(|p| p.symbol()).collect()
    }

    pub(crate) fn flip_mask(&self) -> usize {
        let n = self.letters.len();
        self.letters
            .iter()
            .enumerate()
            .filter(|(_, p)| p.flips())
            .fold(0, |acc, (q, _)| acc | 1 << (n - 1 - q))
    }

    /// Phase acquired by basis index `j`.
    pub(crate) fn phase_of(&self, j: usize) -> C64 {
        let n = self.letters.len();
        self.letters
            .iter()
            .enumerate()
            .fold(c(1.0, 0.0), |acc, (q, p)| acc * p.phase((j >> (n - 1 - q)) & 1 == 1))
    }

    pub fn matrix(&self) -> CMatrix {
        let d = 1 << self.letters.len();
        let mask = self.flip_mask();
        let mut m = CMatrix::zeros(d, d);
        for j in 0..d {
            m[(j ^ mask, j)] = self.phase_of(j);
        }
        m
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl std::str::FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|ch| match ch.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::Parse(format!("unknown Pauli letter '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(letters)
    }
}

/// Normalized pure state of `n ≤ 6` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

/// `|0…0⟩` on `n` qubits.
pub fn ground_state(n: usize) -> Result<StateVector> {
    StateVector::basis(n, 0)
}

impl StateVector {
    pub fn basis(n: usize, index: usize) -> Result<Self> {
        check_qubits(n)?;
        if index >= 1 << n {
            return Err(Error::Argument(format!("basis index {index} out of range")));
        }
        let mut amplitudes = vec![c(0.0, 0.0); 1 << n];
        amplitudes[index] = c(1.0, 0.0);
        Ok(Self { n_qubits: n, amplitudes })
    }

    /// Builds a state from raw amplitudes; the squared norm must already be 1
    /// within 1e-10 and is then renormalized exactly.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if !len.is_power_of_two() || len < 2 {
            return Err(Error::Shape(format!("amplitude count {len} is not 2^n")));
        }
        let n = len.trailing_zeros() as usize;
        check_qubits(n)?;
        let norm_sqr: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sqr - 1.0).abs() > NORM_TOL {
            return Err(Error::Argument(format!("state norm² is {norm_sqr}, expected 1")));
        }
        let scale = 1.0 / norm_sqr.sqrt();
        Ok(Self {
            n_qubits: n,
            amplitudes: amplitudes.into_iter().map(|a| a * scale).collect(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::Shape("inner product of states with different sizes".into()));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn tensor(&self, other: &StateVector) -> Result<Self> {
        let n = self.n_qubits + other.n_qubits;
        check_qubits(n)?;
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        Ok(Self { n_qubits: n, amplitudes })
    }

    pub fn apply(&mut self, u: &Unitary, targets: &[usize]) -> Result<()> {
        check_targets(self.n_qubits, targets)?;
        if u.dimension() != 1 << targets.len() {
            return Err(Error::Shape(format!(
                "gate of dimension {} applied to {} targets",
                u.dimension(),
                targets.len()
            )));
        }
        apply_matrix_to_vector(&mut self.amplitudes, self.n_qubits, u.matrix(), targets);
        Ok(())
    }

    pub fn expectation(&self, p: &PauliString) -> Result<f64> {
        if p.n_qubits() != self.n_qubits {
            return Err(Error::Shape("Pauli string size does not match state".into()));
        }
        let mask = p.flip_mask();
        let value: C64 = (0..self.amplitudes.len())
            .map(|j| self.amplitudes[j ^ mask].conj() * p.phase_of(j) * self.amplitudes[j])
            .sum();
        Ok(value.re.clamp(-1.0, 1.0))
    }

    /// Probability of reading `1` on `qubit`.
    pub fn probability_one(&self, qubit: usize) -> Result<f64> {
        check_targets(self.n_qubits, &[qubit])?;
        let bit = 1 << (self.n_qubits - 1 - qubit);
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(j, _)| j & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    pub fn to_density(&self) -> DensityMatrix {
        let v = DVector::from_column_slice(&self.amplitudes);
        DensityMatrix {
            n_qubits: self.n_qubits,
            elements: &v * v.adjoint(),
        }
    }
}

/// Mixed state of `n ≤ 6` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    elements: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(elements: CMatrix) -> Result<Self> {
        let d = elements.nrows();
        if d != elements.ncols() || !d.is_power_of_two() || d < 2 {
            return Err(Error::Shape(format!(
                "density matrix must be square with power-of-two dimension, got {}x{}",
                elements.nrows(),
                elements.ncols()
            )));
        }
        let n = d.trailing_zeros() as usize;
        check_qubits(n)?;
        let herm = hermitian_defect(&elements);
        if herm > HERMITIAN_TOL {
            return Err(Error::Argument(format!("matrix is not Hermitian (defect {herm:.3e})")));
        }
        let tr = elements.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::Argument(format!("trace is {tr}, expected 1")));
        }
        let rho = Self { n_qubits: n, elements };
        let min = rho.eigenvalues()[0];
        if min < -PSD_TOL {
            return Err(Error::Argument(format!("matrix is not positive semidefinite (λ_min = {min:.3e})")));
        }
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(elements: CMatrix) -> Self {
        let n = elements.nrows().trailing_zeros() as usize;
        Self { n_qubits: n, elements }
    }

    pub fn ground(n: usize) -> Result<Self> {
        Ok(ground_state(n)?.to_density())
    }

    pub fn maximally_mixed(n: usize) -> Result<Self> {
        check_qubits(n)?;
        let d = 1 << n;
        Ok(Self {
            n_qubits: n,
            elements: CMatrix::identity(d, d).map(|v| v / d as f64),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.elements
    }

    pub fn into_matrix(self) -> CMatrix {
        self.elements
    }

    pub fn trace(&self) -> C64 {
        self.elements.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.elements * &self.elements).trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.elements).0
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<Self> {
        let n = self.n_qubits + other.n_qubits;
        check_qubits(n)?;
        Ok(Self {
            n_qubits: n,
            elements: kron(&self.elements, &other.elements),
        })
    }

    pub fn apply(&mut self, u: &Unitary, targets: &[usize]) -> Result<()> {
        check_targets(self.n_qubits, targets)?;
        if u.dimension() != 1 << targets.len() {
            return Err(Error::Shape(format!(
                "gate of dimension {} applied to {} targets",
                u.dimension(),
                targets.len()
            )));
        }
        self.elements = conjugate_density(&self.elements, self.n_qubits, u.matrix(), targets);
        Ok(())
    }

    /// Applies the channel `ρ → Σ_k K_k ρ K_k†` on `targets`.
    pub fn apply_kraus(&mut self, kraus: &[CMatrix], targets: &[usize]) -> Result<()> {
        check_targets(self.n_qubits, targets)?;
        let d = 1 << targets.len();
        if kraus.iter().any(|k| k.nrows() != d || k.ncols() != d) {
            return Err(Error::Shape("Kraus operator size does not match targets".into()));
        }
        let mut acc = CMatrix::zeros(self.elements.nrows(), self.elements.ncols());
        for k in kraus {
            acc += conjugate_density(&self.elements, self.n_qubits, k, targets);
        }
        self.elements = acc;
        Ok(())
    }

    pub fn expectation(&self, p: &PauliString) -> Result<f64> {
        if p.n_qubits() != self.n_qubits {
            return Err(Error::Shape("Pauli string size does not match state".into()));
        }
        let mask = p.flip_mask();
        let value: C64 = (0..self.elements.nrows())
            .map(|j| p.phase_of(j) * self.elements[(j, j ^ mask)])
            .sum();
        Ok(value.re.clamp(-1.0, 1.0))
    }

    pub fn probability_one(&self, qubit: usize) -> Result<f64> {
        check_targets(self.n_qubits, &[qubit])?;
        let bit = 1 << (self.n_qubits - 1 - qubit);
        Ok((0..self.elements.nrows())
            .filter(|j| j & bit != 0)
            .map(|j| self.elements[(j, j)].re)
            .sum())
    }

    /// Reduced state on `keep`, in the order listed.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(Error::Argument("partial trace must keep at least one qubit".into()));
        }
        check_targets(self.n_qubits, keep).map_err(|e| Error::Argument(e.to_string()))?;
        let n = self.n_qubits;
        let k = keep.len();
        let keep_masks: Vec<usize> = keep.iter().map(|&q| 1 << (n - 1 - q)).collect();
        let keep_all = keep_masks.iter().fold(0, |a, &b| a | b);
        let sub = |j: usize| -> usize {
            keep_masks
                .iter()
                .enumerate()
                .filter(|(_, &m)| j & m != 0)
                .fold(0, |acc, (i, _)| acc | 1 << (k - 1 - i))
        };
        let d = 1 << n;
        let mut out = CMatrix::zeros(1 << k, 1 << k);
        for i in 0..d {
            for j in 0..d {
                if i & !keep_all == j & !keep_all {
                    out[(sub(i), sub(j))] += self.elements[(i, j)];
                }
            }
        }
        Ok(DensityMatrix { n_qubits: k, elements: out })
    }
}

/// `e^{−i h t}` for Hermitian `h`, by eigendecomposition.
pub fn matrix_exponential(h: &CMatrix, t: f64) -> Result<Unitary> {
    if h.nrows() != h.ncols() || !h.nrows().is_power_of_two() || h.nrows() < 2 {
        return Err(Error::Shape("generator must be square with power-of-two size".into()));
    }
    let defect = hermitian_defect(h);
    if defect > HERMITIAN_TOL {
        return Err(Error::Argument(format!("generator is not Hermitian (defect {defect:.3e})")));
    }
    let (values, vectors) = hermitian_eigen(h);
    let m = spectral_map(&values, &vectors, |v| C64::from_polar(1.0, -v * t));
    Ok(Unitary::from_matrix_unchecked(m))
}

fn check_psd(rho: &DensityMatrix, name: &str) -> Result<()> {
    let min = rho.eigenvalues()[0];
    if min < -PSD_TOL {
        return Err(Error::Argument(format!("{name} is not positive semidefinite (λ_min = {min:.3e})")));
    }
    Ok(())
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`, evaluated as the squared trace norm of
/// `√ρ √σ`.
pub fn state_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.n_qubits != sigma.n_qubits {
        return Err(Error::Shape("fidelity between states of different sizes".into()));
    }
    check_psd(rho, "first argument")?;
    check_psd(sigma, "second argument")?;
    let product = psd_sqrt(&rho.elements) * psd_sqrt(&sigma.elements);
    let trace_norm: f64 = product.singular_values().iter().sum();
    Ok((trace_norm * trace_norm).clamp(0.0, 1.0))
}

/// The literal overlap `Tr(√ρ σ √ρ) = Tr(ρσ)`. Equals the Uhlmann fidelity
/// only when one argument is pure.
pub fn trace_overlap(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.n_qubits != sigma.n_qubits {
        return Err(Error::Shape("overlap between states of different sizes".into()));
    }
    Ok((&rho.elements * &sigma.elements).trace().re)
}

/// Either kind of state, for code that runs circuits on both.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl State {
    pub fn n_qubits(&self) -> usize {
        match self {
            State::Pure(s) => s.n_qubits(),
            State::Mixed(r) => r.n_qubits(),
        }
    }

    pub fn apply(&mut self, u: &Unitary, targets: &[usize]) -> Result<()> {
        match self {
            State::Pure(s) => s.apply(u, targets),
            State::Mixed(r) => r.apply(u, targets),
        }
    }

    pub fn expectation(&self, p: &PauliString) -> Result<f64> {
        match self {
            State::Pure(s) => s.expectation(p),
            State::Mixed(r) => r.expectation(p),
        }
    }

    pub fn expectation_z(&self, qubit: usize) -> Result<f64> {
        self.expectation(&PauliString::z(self.n_qubits(), qubit)?)
    }

    pub fn probability_one(&self, qubit: usize) -> Result<f64> {
        match self {
            State::Pure(s) => s.probability_one(qubit),
            State::Mixed(r) => r.probability_one(qubit),
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            State::Pure(s) => s.to_density(),
            State::Mixed(r) => r.clone(),
        }
    }

    /// Converts to a density matrix in place and returns it.
    pub fn make_mixed(&mut self) -> &mut DensityMatrix {
        if let State::Pure(s) = self {
            *self = State::Mixed(s.to_density());
        }
        match self {
            State::Mixed(r) => r,
            State::Pure(_) => unreachable!(),
        }
    }
}

impl From<StateVector> for State {
    fn from(s: StateVector) -> Self {
        State::Pure(s)
    }
}

impl From<DensityMatrix> for State {
    fn from(r: DensityMatrix) -> Self {
        State::Mixed(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn x_gate() -> Unitary {
        Unitary::new(Pauli::X.matrix()).unwrap()
    }

    fn rx(theta: f64) -> Unitary {
        matrix_exponential(&Pauli::X.matrix(), theta / 2.0).unwrap()
    }

    fn bell() -> StateVector {
        let h = FRAC_1_SQRT_2;
        StateVector::from_amplitudes(vec![c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(h, 0.0)]).unwrap()
    }

    #[test]
    fn ground_state_has_unit_first_amplitude() {
        assert_eq!(ground_state(1).unwrap().amplitudes(), &[c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(ground_state(2).unwrap().amplitudes().len(), 4);
        let g5 = ground_state(5).unwrap();
        assert_eq!(g5.amplitudes().len(), 32);
        assert_eq!(g5.amplitudes()[0], c(1.0, 0.0));
        assert!(g5.amplitudes()[1..].iter().all(|a| a.norm() == 0.0));
    }

    #[test]
    fn ground_state_rejects_bad_sizes() {
        assert_eq!(ground_state(0), Err(Error::Size(0)));
        assert_eq!(ground_state(7), Err(Error::Size(7)));
    }

    #[test]
    fn x_flips_ground_state() {
        let mut s = ground_state(1).unwrap();
        s.apply(&x_gate(), &[0]).unwrap();
        assert_eq!(s.amplitudes(), &[c(0.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn qubit_zero_is_most_significant() {
        let mut s = ground_state(3).unwrap();
        s.apply(&x_gate(), &[0]).unwrap();
        assert_eq!(s.amplitudes()[4], c(1.0, 0.0));
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let mut s = bell();
        let before = s.clone();
        s.apply(&Unitary::identity(2), &[1, 0]).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn apply_rejects_mismatched_gate() {
        let mut s = ground_state(2).unwrap();
        assert!(matches!(s.apply(&x_gate(), &[0, 1]), Err(Error::Shape(_))));
        assert!(matches!(s.apply(&x_gate(), &[2]), Err(Error::Shape(_))));
        let mut r = DensityMatrix::ground(2).unwrap();
        assert!(matches!(r.apply(&Unitary::identity(2), &[1, 1]), Err(Error::Shape(_))));
    }

    #[test]
    fn pure_and_mixed_application_agree() {
        let u = matrix_exponential(
            &(kron(&Pauli::X.matrix(), &Pauli::Y.matrix()) + kron(&Pauli::Z.matrix(), &Pauli::Z.matrix())),
            0.37,
        )
        .unwrap();
        let mut s = ground_state(3).unwrap();
        s.apply(&rx(0.4), &[1]).unwrap();
        let mut r = s.to_density();
        s.apply(&u, &[2, 0]).unwrap();
        r.apply(&u, &[2, 0]).unwrap();
        assert!(max_abs_diff(s.to_density().matrix(), r.matrix()) < 1e-14);
    }

    #[test]
    fn z_expectations() {
        let z = PauliString::z(1, 0).unwrap();
        assert_eq!(ground_state(1).unwrap().expectation(&z).unwrap(), 1.0);
        let mut s = ground_state(1).unwrap();
        s.apply(&rx(PI / 2.0), &[0]).unwrap();
        assert!(s.expectation(&z).unwrap().abs() < 1e-15);
    }

    #[test]
    fn y_expectation_sign() {
        // Rx(θ)|0⟩ has ⟨Y⟩ = −sin θ.
        let mut s = ground_state(1).unwrap();
        s.apply(&rx(0.3), &[0]).unwrap();
        let y = PauliString::single(1, 0, Pauli::Y).unwrap();
        assert!((s.expectation(&y).unwrap() + 0.3f64.sin()).abs() < 1e-14);
        assert!((s.to_density().expectation(&y).unwrap() + 0.3f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn pauli_string_matrix_matches_kron() {
        let p: PauliString = "XYZ".parse().unwrap();
        let expected = kron(&kron(&Pauli::X.matrix(), &Pauli::Y.matrix()), &Pauli::Z.matrix());
        assert!(max_abs_diff(&p.matrix(), &expected) < 1e-15);
    }

    #[test]
    fn pauli_index_order_is_lexicographic() {
        let all = PauliString::all(2).unwrap();
        let labels: Vec<String> = all.iter().map(|p| p.label()).collect();
        assert_eq!(&labels[..5], &["II", "IX", "IY", "IZ", "XI"]);
        assert_eq!(labels[15], "ZZ");
    }

    #[test]
    fn expectation_size_mismatch() {
        let z = PauliString::z(2, 0).unwrap();
        assert!(matches!(ground_state(1).unwrap().expectation(&z), Err(Error::Shape(_))));
    }

    #[test]
    fn partial_trace_of_product_state() {
        let r = DensityMatrix::ground(2).unwrap();
        let reduced = r.partial_trace(&[0]).unwrap();
        assert!(max_abs_diff(reduced.matrix(), DensityMatrix::ground(1).unwrap().matrix()) < 1e-15);
    }

    #[test]
    fn partial_trace_of_bell_is_maximally_mixed() {
        let r = bell().to_density();
        let half = DensityMatrix::maximally_mixed(1).unwrap();
        for q in 0..2 {
            let reduced = r.partial_trace(&[q]).unwrap();
            assert!(max_abs_diff(reduced.matrix(), half.matrix()) < 1e-15);
        }
    }

    #[test]
    fn partial_trace_keep_order_permutes() {
        let mut s = ground_state(2).unwrap();
        s.apply(&x_gate(), &[1]).unwrap();
        let r = s.to_density();
        let swapped = r.partial_trace(&[1, 0]).unwrap();
        assert_eq!(swapped.matrix()[(2, 2)], c(1.0, 0.0));
        assert!(matches!(r.partial_trace(&[]), Err(Error::Argument(_))));
    }

    #[test]
    fn matrix_exponential_examples() {
        let zero = CMatrix::zeros(2, 2);
        let u = matrix_exponential(&zero, 1.3).unwrap();
        assert!(max_abs_diff(u.matrix(), &CMatrix::identity(2, 2)) < 1e-15);

        let u = matrix_exponential(&Pauli::X.matrix(), PI / 2.0).unwrap();
        let expected = Pauli::X.matrix().map(|v| v * c(0.0, -1.0));
        assert!(max_abs_diff(u.matrix(), &expected) < 1e-14);
    }

    #[test]
    fn matrix_exponential_rejects_non_hermitian() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(matrix_exponential(&m, 1.0), Err(Error::Argument(_))));
    }

    #[test]
    fn fidelity_examples() {
        let zero = DensityMatrix::ground(1).unwrap();
        let mut one_state = ground_state(1).unwrap();
        one_state.apply(&x_gate(), &[0]).unwrap();
        let one = one_state.to_density();
        let half = DensityMatrix::maximally_mixed(1).unwrap();
        assert!((state_fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-12);
        assert!(state_fidelity(&zero, &one).unwrap().abs() < 1e-12);
        // Oracle: √ρ = ρ for a projector, so √ρσ√ρ = |0⟩⟨0|/2 with one
        // eigenvalue 1/2; (√(1/2))² = 0.5.
        assert!((state_fidelity(&zero, &half).unwrap() - 0.5).abs() < 1e-12);
        assert!((state_fidelity(&half, &zero).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fidelity_rejects_negative_input() {
        let bad = DensityMatrix::from_matrix_unchecked(CMatrix::from_row_slice(
            2,
            2,
            &[c(1.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)],
        ));
        let zero = DensityMatrix::ground(1).unwrap();
        assert!(matches!(state_fidelity(&bad, &zero), Err(Error::Argument(_))));
    }

    #[test]
    fn density_validation() {
        let m = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.4, 0.0)]);
        assert!(matches!(DensityMatrix::new(m), Err(Error::Argument(_))));
        let m = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.2, 0.0), c(0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(m), Err(Error::Argument(_))));
        let m = CMatrix::from_row_slice(2, 2, &[c(1.2, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.2, 0.0)]);
        assert!(matches!(DensityMatrix::new(m), Err(Error::Argument(_))));
    }

    #[test]
    fn literal_overlap_differs_for_mixed_states() {
        let half = DensityMatrix::maximally_mixed(1).unwrap();
        assert!((trace_overlap(&half, &half).unwrap() - 0.5).abs() < 1e-15);
        assert!((state_fidelity(&half, &half).unwrap() - 1.0).abs() < 1e-12);
    }
}
