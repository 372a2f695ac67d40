//! State and process tomography in the tensor-Pauli basis.
//!
//! Basis order is lexicographic, `I < X < Y < Z`, with qubit 0 the most
//! significant letter: for two qubits the χ rows run `II, IX, IY, IZ, XI, ...`.

use std::f64::consts::FRAC_PI_2;

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gates::{pauli_x, rotation_matrix, rotation_y, Axis};
use crate::qsim::{c, hermitian_defect, hermitian_eigen, spectral_map, CMatrix, DensityMatrix, PauliString, StateVector, Unitary, C64};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Largest register QPT supports.
pub const MAX_QPT_QUBITS: usize = 3;

/// `ρ = 2^{−n} Σ_P ⟨P⟩ P`. Negative eigenvalues (from sampled accessors) are
/// clipped and the result renormalized.
pub fn qst(accessor: impl Fn(&PauliString) -> Result<f64>, n: usize) -> Result<DensityMatrix> {
    let d = 1usize << n;
    let mut rho = CMatrix::zeros(d, d);
    for p in PauliString::all(n)? {
        let value = accessor(&p)?;
        if !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite ⟨{p}⟩")));
        }
        let mask = p.flip_mask();
        for j in 0..d {
            rho[(j ^ mask, j)] += p.phase_of(j) * value;
        }
    }
    rho /= c(d as f64, 0.0);
    let rho = (&rho + rho.adjoint()) * c(0.5, 0.0);
    let (values, vectors) = hermitian_eigen(&rho);
    let rho = if values[0] < -1e-10 {
        let clipped = spectral_map(&values, &vectors, |v| c(v.max(0.0), 0.0));
        let tr = clipped.trace().re;
        if tr <= 0.0 {
            return Err(Error::Numerical("reconstructed state has no positive weight".into()));
        }
        clipped / c(tr, 0.0)
    } else {
        let tr = rho.trace().re;
        rho / c(tr, 0.0)
    };
    Ok(DensityMatrix::from_matrix_unchecked(rho))
}

/// QST from a known state with binomially sampled Pauli expectations.
pub fn qst_sampled(rho: &DensityMatrix, shots: u64, rng: &mut impl rand::Rng) -> Result<DensityMatrix> {
    if shots == 0 {
        return qst(|p| rho.expectation(p), rho.n_qubits());
    }
    let n = rho.n_qubits();
    let mut values = Vec::new();
    for p in PauliString::all(n)? {
        let exact = rho.expectation(&p)?;
        if p.letters().iter().all(|&l| l == crate::qsim::Pauli::I) {
            values.push(exact);
            continue;
        }
        let p_minus = ((1.0 - exact) / 2.0).clamp(0.0, 1.0);
        let k = Binomial::new(shots, p_minus)
            .map_err(|e| Error::Numerical(format!("binomial sampling: {e}")))?
            .sample(rng);
        values.push(1.0 - 2.0 * k as f64 / shots as f64);
    }
    let all = PauliString::all(n)?;
    qst(|p| Ok(values[all.iter().position(|q| q == p).expect("enumerated")]), n)
}

/// Single-qubit preparation operators `{I, +X/2, −X/2, +Y/2, −Y/2, X}`.
pub fn preparation_ops() -> [Unitary; 6] {
    [
        Unitary::identity(1),
        rotation_matrix(Axis::X, FRAC_PI_2),
        rotation_matrix(Axis::X, -FRAC_PI_2),
        rotation_y(FRAC_PI_2),
        rotation_y(-FRAC_PI_2),
        pauli_x(),
    ]
}

/// The `6^n` input states, lexicographic with qubit 0 most significant.
pub fn input_states(n: usize) -> Result<Vec<DensityMatrix>> {
    if n == 0 || n > MAX_QPT_QUBITS {
        return Err(Error::Size(n));
    }
    let ops = preparation_ops();
    let count = 6usize.pow(n as u32);
    (0..count)
        .map(|idx| {
            let mut u = Unitary::identity(0);
            for q in 0..n {
                let digit = idx / 6usize.pow((n - 1 - q) as u32) % 6;
                u = u.tensor(&ops[digit]);
            }
            let mut s = StateVector::basis(n, 0)?;
            s.apply(&u, &(0..n).collect::<Vec<_>>())?;
            Ok(s.to_density())
        })
        .collect()
}

/// Process matrix in the Pauli basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiMatrix {
    pub n_qubits: usize,
    pub elements: CMatrix,
}

impl ChiMatrix {
    pub fn dimension(&self) -> usize {
        self.elements.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.elements.trace()
    }

    pub fn hermitian_defect(&self) -> f64 {
        hermitian_defect(&self.elements)
    }

    pub fn basis_labels(&self) -> Vec<String> {
        PauliString::all(self.n_qubits).map(|v| v.iter().map(|p| p.label()).collect()).unwrap_or_default()
    }

    pub fn get(&self, row: &str, col: &str) -> Result<C64> {
        let labels = self.basis_labels();
        let find = |s: &str| {
            labels
                .iter()
                .position(|l| l == s)
                .ok_or_else(|| Error::Argument(format!("'{s}' is not a basis label")))
        };
        Ok(self.elements[(find(row)?, find(col)?)])
    }

    pub fn to_json(&self) -> ChiJson {
        let d = self.dimension();
        ChiJson {
            n_qubits: self.n_qubits,
            basis_order: "lexicographic I<X<Y<Z, qubit 0 most significant".into(),
            basis: self.basis_labels(),
            elements: (0..d)
                .map(|i| (0..d).map(|j| [self.elements[(i, j)].re, self.elements[(i, j)].im]).collect())
                .collect(),
        }
    }

    pub fn from_json(json: &ChiJson) -> Result<Self> {
        let d = 1usize << (2 * json.n_qubits);
        if json.elements.len() != d || json.elements.iter().any(|r| r.len() != d) {
            return Err(Error::Shape(format!("χ for {} qubits must be {d}×{d}", json.n_qubits)));
        }
        let elements = CMatrix::from_fn(d, d, |i, j| c(json.elements[i][j][0], json.elements[i][j][1]));
        Ok(Self { n_qubits: json.n_qubits, elements })
    }
}

/// Serialized χ: basis labels plus `[re, im]` entries, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiJson {
    pub n_qubits: usize,
    pub basis_order: String,
    pub basis: Vec<String>,
    pub elements: Vec<Vec<[f64; 2]>>,
}

/// Moore–Penrose pseudo-inverse of the (vectorized) input-state matrix,
/// giving the weights that expand each `|a⟩⟨b|` over the inputs.
fn expansion_weights(inputs: &[DensityMatrix], d: usize) -> Result<CMatrix> {
    let k = inputs.len();
    let a = CMatrix::from_fn(d * d, k, |row, col| inputs[col].matrix()[(row / d, row % d)]);
    let svd = a.svd(true, true);
    let max = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10 * max).count();
    if rank != d * d {
        return Err(Error::Internal(format!("input set spans rank {rank}, need {}", d * d)));
    }
    svd.pseudo_inverse(1e-10 * max).map_err(|e| Error::Internal(e.to_string()))
}

/// Linear-inversion QPT from output states (already reconstructed).
fn chi_from_outputs(n: usize, inputs: &[DensityMatrix], outputs: &[DensityMatrix]) -> Result<ChiMatrix> {
    let d = 1usize << n;
    let w = expansion_weights(inputs, d)?;
    // E(|a⟩⟨b|) for every (a, b), indexed a·d + b.
    let images: Vec<CMatrix> = (0..d * d)
        .map(|ab| {
            let mut acc = CMatrix::zeros(d, d);
            for (k, out) in outputs.iter().enumerate() {
                let wk = w[(k, ab)];
                if wk.norm() > 0.0 {
                    acc += out.matrix() * wk;
                }
            }
            acc
        })
        .collect();
    let paulis = PauliString::all(n)?;
    let masks: Vec<usize> = paulis.iter().map(|p| p.flip_mask()).collect();
    let phases: Vec<Vec<C64>> = paulis.iter().map(|p| (0..d).map(|j| p.phase_of(j)).collect()).collect();
    let m = paulis.len();
    let scale = 1.0 / (d * d) as f64;
    let rows: Vec<Vec<C64>> = (0..m)
        .into_par_iter()
        .map(|mi| {
            (0..m)
                .map(|ni| {
                    let mut acc = c(0.0, 0.0);
                    for a in 0..d {
                        let pa = phases[mi][a].conj();
                        for b in 0..d {
                            acc += pa * phases[ni][b] * images[a * d + b][(a ^ masks[mi], b ^ masks[ni])];
                        }
                    }
                    acc * scale
                })
                .collect()
        })
        .collect();
    Ok(ChiMatrix { n_qubits: n, elements: CMatrix::from_fn(m, m, |i, j| rows[i][j]) })
}

/// QPT of a black-box channel on `n ≤ 3` qubits, with outputs read back by
/// analytic QST.
pub fn qpt<F>(process: F, n: usize) -> Result<ChiMatrix>
where
    F: Fn(&DensityMatrix) -> Result<DensityMatrix> + Sync,
{
    let inputs = input_states(n)?;
    let outputs = inputs
        .par_iter()
        .map(|rho| {
            let out = process(rho)?;
            if out.n_qubits() != n {
                return Err(Error::Shape("process changed the register size".into()));
            }
            qst(|p| out.expectation(p), n)
        })
        .collect::<Result<Vec<_>>>()?;
    chi_from_outputs(n, &inputs, &outputs)
}

/// QPT with every output tomographed from `shots` samples per Pauli.
pub fn qpt_sampled<F>(process: F, n: usize, shots: u64, seed: u64) -> Result<ChiMatrix>
where
    F: Fn(&DensityMatrix) -> Result<DensityMatrix> + Sync,
{
    let inputs = input_states(n)?;
    let outputs = inputs
        .par_iter()
        .enumerate()
        .map(|(k, rho)| {
            let out = process(rho)?;
            let mut r = rng::stream(seed, Purpose::Sampling, k as u64);
            qst_sampled(&out, shots, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    chi_from_outputs(n, &inputs, &outputs)
}

/// `χ_ab = c_a c_b*` with `U = Σ_a c_a P_a`.
pub fn ideal_chi(u: &Unitary) -> Result<ChiMatrix> {
    let n = u.n_qubits();
    if n == 0 || n > MAX_QPT_QUBITS {
        return Err(Error::Size(n));
    }
    let defect = u.unitarity_defect();
    if defect > 1e-9 {
        return Err(Error::Argument(format!("not unitary (defect {defect:.2e})")));
    }
    let d = u.dimension();
    let coeffs: Vec<C64> = PauliString::all(n)?
        .iter()
        .map(|p| {
            let mask = p.flip_mask();
            // Tr(P U) = Σ_j ⟨j|P U|j⟩, with P|k⟩ = phase(k)|k⊕mask⟩.
            let tr: C64 = (0..d).map(|k| p.phase_of(k) * u.matrix()[(k, k ^ mask)]).sum();
            tr / d as f64
        })
        .collect();
    let m = coeffs.len();
    let mut elements = CMatrix::from_fn(m, m, |a, b| coeffs[a] * coeffs[b].conj());
    let tr = elements.trace().re;
    elements /= c(tr, 0.0);
    Ok(ChiMatrix { n_qubits: n, elements })
}

/// `Re Tr(χ_exp χ_id)`, clipped to `[0, 1]`.
pub fn process_fidelity(chi_exp: &ChiMatrix, chi_id: &ChiMatrix) -> Result<f64> {
    if chi_exp.dimension() != chi_id.dimension() {
        return Err(Error::Shape(format!(
            "χ matrices of dimension {} and {}",
            chi_exp.dimension(),
            chi_id.dimension()
        )));
    }
    Ok((&chi_exp.elements * &chi_id.elements).trace().re.clamp(0.0, 1.0))
}

/// The channel `ρ → U ρ U†` on all qubits.
pub fn unitary_process(u: Unitary) -> impl Fn(&DensityMatrix) -> Result<DensityMatrix> + Sync {
    move |rho: &DensityMatrix| {
        let mut out = rho.clone();
        out.apply(&u, &(0..u.n_qubits()).collect::<Vec<_>>())?;
        Ok(out)
    }
}
