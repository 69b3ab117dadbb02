//! States, measurements and channels on one or two qubits.
//!
//! Conventions used throughout the crate:
//! * vectorization stacks columns (column-major), so `vec(A B C) = (Cᵀ ⊗ A) vec(B)`;
//! * a channel is stored in the natural representation, acting on vectorized
//!   density matrices; the unitary channel `ρ ↦ UρU†` is `conj(U) ⊗ U`;
//! * qubit 0 is the left tensor factor, computational basis index `2·b0 + b1`;
//! * Pauli strings are ordered `{I,X,Y,Z} ⊗ {I,X,Y,Z}` lexicographically.

use nalgebra::{DMatrix, DVector};

use crate::{CMat, Error, RMat, Result, C64};

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const UNITARY_TOL: f64 = 1e-12;
const KRAUS_TOL: f64 = 1e-9;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn dagger(m: &CMat) -> CMat {
    m.adjoint()
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Largest absolute entry, used as the matrix "distance" in validity checks.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn check_qubit_dim(d: usize) -> Result<()> {
    if d == 2 || d == 4 {
        Ok(())
    } else {
        Err(Error::Dimension(format!("expected a 1- or 2-qubit operator, got dimension {d}")))
    }
}

/// Single-qubit Pauli matrix: 0 = I, 1 = X, 2 = Y, 3 = Z.
pub fn pauli(i: usize) -> CMat {
    let (o, z, im) = (c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0));
    match i {
        0 => CMat::from_row_slice(2, 2, &[o, z, z, o]),
        1 => CMat::from_row_slice(2, 2, &[z, o, o, z]),
        2 => CMat::from_row_slice(2, 2, &[z, -im, im, z]),
        3 => CMat::from_row_slice(2, 2, &[o, z, z, -o]),
        _ => panic!("pauli index {i} out of range"),
    }
}

/// Pauli string for `n_qubits` qubits; `index` digits are read base 4 with
/// qubit 0 as the most significant digit.
pub fn pauli_string(index: usize, n_qubits: usize) -> CMat {
    let mut out = CMat::identity(1, 1);
    for q in 0..n_qubits {
        let digit = (index / 4usize.pow((n_qubits - 1 - q) as u32)) % 4;
        out = kron(&out, &pauli(digit));
    }
    out
}

pub fn n_qubits(d: usize) -> usize {
    match d {
        2 => 1,
        4 => 2,
        _ => panic!("unsupported Hilbert-space dimension {d}"),
    }
}

/// Column-major vectorization.
pub fn vec(m: &CMat) -> DVector<C64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DVector<C64>) -> Result<CMat> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() {
        return Err(Error::Dimension(format!("vector of length {} is not a square matrix", v.len())));
    }
    Ok(CMat::from_column_slice(d, d, v.as_slice()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: CMat,
}

impl DensityMatrix {
    /// Validates hermiticity, unit trace and positivity.
    pub fn new(m: CMat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension("density matrix must be square".into()));
        }
        check_qubit_dim(m.nrows())?;
        let herm = max_abs(&(&m - m.adjoint()));
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:.3e})")));
        }
        let tr = m.trace();
        if (tr - c(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = hermitian_eigenvalues(&m).iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok(Self { m })
    }

    pub fn pure(psi: &[C64]) -> Result<Self> {
        let v = DVector::from_column_slice(psi);
        let norm = v.norm();
        let v = v / c(norm, 0.0);
        Self::new(&v * v.adjoint())
    }

    /// Computational basis state `|index⟩⟨index|`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        check_qubit_dim(dim)?;
        let mut m = CMat::zeros(dim, dim);
        m[(index, index)] = c(1.0, 0.0);
        Self::new(m)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        check_qubit_dim(dim)?;
        Self::new(CMat::identity(dim, dim) / c(dim as f64, 0.0))
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn to_vec(&self) -> DVector<C64> {
        vec(&self.m)
    }
}

/// Eigenvalues of a Hermitian matrix (the anti-Hermitian part is discarded).
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let h = (m + m.adjoint()) * c(0.5, 0.0);
    nalgebra::SymmetricEigen::new(h).eigenvalues.iter().cloned().collect()
}

/// A channel in the natural (column-stacking) representation.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOp {
    m: CMat,
}

impl SuperOp {
    pub fn from_matrix(m: CMat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension("superoperator must be square".into()));
        }
        let d = (m.nrows() as f64).sqrt().round() as usize;
        if d * d != m.nrows() {
            return Err(Error::Dimension(format!("superoperator size {} is not d²", m.nrows())));
        }
        check_qubit_dim(d)?;
        Ok(Self { m })
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: CMat::identity(dim * dim, dim * dim) }
    }

    /// Diagonal superoperator (a Schur multiplier on the density matrix).
    pub fn from_diagonal(diag: &[C64]) -> Result<Self> {
        Self::from_matrix(CMat::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    /// Hilbert-space dimension `d` (the matrix is `d² × d²`).
    pub fn dim(&self) -> usize {
        (self.m.nrows() as f64).sqrt().round() as usize
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn after(&self, first: &SuperOp) -> SuperOp {
        SuperOp { m: &self.m * &first.m }
    }

    pub fn pow(&self, p: usize) -> SuperOp {
        let mut out = SuperOp::identity(self.dim());
        for _ in 0..p {
            out = self.after(&out);
        }
        out
    }

    /// Image of an operator (not necessarily a state) under the channel.
    pub fn apply_matrix(&self, rho: &CMat) -> Result<CMat> {
        if rho.nrows() != self.dim() {
            return Err(Error::Dimension(format!(
                "state dimension {} does not match channel dimension {}",
                rho.nrows(),
                self.dim()
            )));
        }
        unvec(&(&self.m * vec(rho)))
    }

    /// Output of the channel; no positivity check is made because
    /// intermediate (non-CP) maps are legitimate values here.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<CMat> {
        self.apply_matrix(rho.matrix())
    }

    pub fn to_ptm(&self) -> RMat {
        superop_to_ptm(self)
    }

    /// Trace preservation ⇔ first PTM row equals (1, 0, …, 0).
    pub fn trace_preservation_error(&self) -> f64 {
        let ptm = self.to_ptm();
        (0..ptm.ncols())
            .map(|j| (ptm[(0, j)] - if j == 0 { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    /// Normalized Choi matrix `(E ⊗ 1)(|Φ⟩⟨Φ|)`, input factor first:
    /// `J = (1/d) Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|)`.
    pub fn choi(&self) -> CMat {
        let d = self.dim();
        let mut j = CMat::zeros(d * d, d * d);
        for col in 0..d {
            for row in 0..d {
                // E(|row⟩⟨col|) is the column of the superoperator at vec index row + d·col.
                let k = row + d * col;
                for b in 0..d {
                    for a in 0..d {
                        j[(row * d + a, col * d + b)] = self.m[(a + d * b, k)] / c(d as f64, 0.0);
                    }
                }
            }
        }
        j
    }

    /// Smallest Choi eigenvalue; the channel is CP iff this is ≥ 0.
    pub fn min_choi_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.choi()).into_iter().fold(f64::INFINITY, f64::min)
    }
}

pub fn unitary_superop(u: &CMat) -> Result<SuperOp> {
    if !u.is_square() {
        return Err(Error::Dimension("unitary must be square".into()));
    }
    let dev = max_abs(&(u.adjoint() * u - CMat::identity(u.nrows(), u.nrows())));
    if dev > UNITARY_TOL {
        return Err(Error::NotUnitary(dev));
    }
    SuperOp::from_matrix(kron(&u.conjugate(), u))
}

#[derive(Debug, Clone)]
pub struct KrausSet {
    ops: Vec<CMat>,
}

impl KrausSet {
    pub fn new(ops: Vec<CMat>) -> Result<Self> {
        let first = ops.first().ok_or_else(|| Error::Dimension("empty Kraus set".into()))?;
        let d = first.nrows();
        if ops.iter().any(|k| k.nrows() != d || k.ncols() != d) {
            return Err(Error::Dimension("Kraus operators must share a square shape".into()));
        }
        Ok(Self { ops })
    }

    pub fn ops(&self) -> &[CMat] {
        &self.ops
    }

    /// `max |Σ K†K − 1|`.
    pub fn completeness_error(&self) -> f64 {
        let d = self.ops[0].nrows();
        let sum = self.ops.iter().fold(CMat::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        max_abs(&(sum - CMat::identity(d, d)))
    }
}

/// `Σ_n conj(K_n) ⊗ K_n`; rejects incomplete sets.
pub fn kraus_to_superop(k: &KrausSet) -> Result<SuperOp> {
    let err = k.completeness_error();
    if err > KRAUS_TOL {
        return Err(Error::IncompleteKraus(err));
    }
    let d = k.ops[0].nrows();
    let m = k.ops.iter().fold(CMat::zeros(d * d, d * d), |acc, op| acc + kron(&op.conjugate(), op));
    SuperOp::from_matrix(m)
}

/// Change-of-basis matrix whose columns are `vec(P_i)/√d`.
pub fn pauli_transform(d: usize) -> CMat {
    static ONE: std::sync::OnceLock<CMat> = std::sync::OnceLock::new();
    static TWO: std::sync::OnceLock<CMat> = std::sync::OnceLock::new();
    match d {
        2 => ONE.get_or_init(|| build_pauli_transform(2)).clone(),
        4 => TWO.get_or_init(|| build_pauli_transform(4)).clone(),
        _ => build_pauli_transform(d),
    }
}

fn build_pauli_transform(d: usize) -> CMat {
    let n = n_qubits(d);
    let mut t = CMat::zeros(d * d, d * d);
    let scale = c(1.0 / (d as f64).sqrt(), 0.0);
    for i in 0..d * d {
        let v = vec(&pauli_string(i, n)) * scale;
        t.set_column(i, &v);
    }
    t
}

/// `T† S T`; the result is real for Hermiticity-preserving maps.
pub fn superop_to_ptm(s: &SuperOp) -> RMat {
    let t = pauli_transform(s.dim());
    let r = t.adjoint() * s.matrix() * &t;
    r.map(|z| z.re)
}

pub fn ptm_to_superop(r: &RMat) -> Result<SuperOp> {
    let d = (r.nrows() as f64).sqrt().round() as usize;
    if d * d != r.nrows() || !r.is_square() {
        return Err(Error::Dimension(format!("PTM of size {}×{} is not d²×d²", r.nrows(), r.ncols())));
    }
    check_qubit_dim(d)?;
    let t = pauli_transform(d);
    let rc = r.map(|x| c(x, 0.0));
    SuperOp::from_matrix(&t * rc * t.adjoint())
}

#[derive(Debug, Clone)]
pub struct Povm {
    effects: Vec<CMat>,
    labels: Vec<String>,
}

impl Povm {
    pub fn new(effects: Vec<CMat>, labels: Vec<String>) -> Result<Self> {
        if effects.is_empty() || effects.len() != labels.len() {
            return Err(Error::Dimension("POVM needs one label per effect".into()));
        }
        let d = effects[0].nrows();
        let mut sum = CMat::zeros(d, d);
        for e in &effects {
            if e.nrows() != d || e.ncols() != d {
                return Err(Error::Dimension("POVM effects must share a square shape".into()));
            }
            let min = hermitian_eigenvalues(e).into_iter().fold(f64::INFINITY, f64::min);
            if min < -PSD_TOL {
                return Err(Error::InvalidState(format!("POVM effect has eigenvalue {min:.3e}")));
            }
            sum += e;
        }
        let dev = max_abs(&(sum - CMat::identity(d, d)));
        if dev > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("POVM effects do not sum to identity ({dev:.3e})")));
        }
        Ok(Self { effects, labels })
    }

    /// Projective measurement in the computational basis; labels are bitstrings.
    pub fn computational(dim: usize) -> Result<Self> {
        check_qubit_dim(dim)?;
        let n = n_qubits(dim);
        let effects = (0..dim)
            .map(|i| {
                let mut m = CMat::zeros(dim, dim);
                m[(i, i)] = c(1.0, 0.0);
                m
            })
            .collect();
        let labels = (0..dim).map(|i| format!("{:0width$b}", i, width = n)).collect();
        Self::new(effects, labels)
    }

    pub fn effects(&self) -> &[CMat] {
        &self.effects
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }
}

/// `p_μ = tr(M_μ ρ)`; entries below −1e-10 are reported as unphysical.
pub fn probabilities(povm: &Povm, rho: &CMat) -> Result<Vec<f64>> {
    let p: Vec<f64> = povm.effects.iter().map(|e| (e * rho).trace().re).collect();
    if let Some(&worst) = p.iter().find(|&&x| x < -PSD_TOL) {
        return Err(Error::Unphysical(worst));
    }
    Ok(p)
}

/// Real symmetric matrix helper used by several modules.
pub fn real_identity(n: usize) -> RMat {
    DMatrix::identity(n, n)
}
