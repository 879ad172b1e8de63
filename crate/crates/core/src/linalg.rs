//! Dense complex linear algebra used throughout the crate.
//!
//! Qubit ordering: qubit 0 is the most significant bit of a basis index, so
//! `kron(a, b)` places `a` on the lower-numbered qubit.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Tolerance on `max |H - H^dagger|` for a matrix to count as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn pauli(self) -> CMatrix {
        match self {
            Axis::X => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            Axis::Y => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            Axis::Z => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::InvalidInput(format!("unknown axis `{other}`"))),
        }
    }
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(h: &CMatrix, tol: f64) -> bool {
    h.is_square() && max_abs_diff(h, &h.adjoint()) <= tol
}

pub fn is_unitary(u: &CMatrix, tol: f64) -> bool {
    u.is_square() && max_abs_diff(&(u.adjoint() * u), &identity(u.nrows())) <= tol
}

fn check_finite(m: &CMatrix) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues sorted ascending.
/// Columns of the returned matrix are the matching orthonormal eigenvectors.
pub fn hermitian_eigen(h: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    check_finite(h)?;
    if !is_hermitian(h, HERMITIAN_TOL) {
        return Err(Error::NotHermitian);
    }
    // symmetrise so round-off in the input does not leak into the solver
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(h.nrows(), h.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// `exp(-i s H)` for Hermitian `H`, via eigendecomposition.
pub fn expm_hermitian(h: &CMatrix, s: f64) -> Result<CMatrix> {
    if !h.is_square() || !is_power_of_two(h.nrows()) {
        return Err(Error::DimMismatch(format!(
            "generator must be square with power-of-two dimension, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let (values, vectors) = hermitian_eigen(h)?;
    let mut scaled = vectors.clone();
    for (k, lambda) in values.iter().enumerate() {
        let phase = C64::from_polar(1.0, -s * lambda);
        for z in scaled.column_mut(k).iter_mut() {
            *z *= phase;
        }
    }
    Ok(scaled * vectors.adjoint())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// `Tr(U^dagger V)`.
pub fn trace_inner(u: &CMatrix, v: &CMatrix) -> C64 {
    u.iter().zip(v.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `1 - |Tr(U^dagger V)| / dim`; zero iff `U = e^{i phi} V`.
pub fn phase_invariant_distance(u: &CMatrix, v: &CMatrix) -> Result<f64> {
    if u.shape() != v.shape() || !u.is_square() {
        return Err(Error::DimMismatch(format!(
            "cannot compare {:?} with {:?}",
            u.shape(),
            v.shape()
        )));
    }
    let d = u.nrows() as f64;
    Ok((1.0 - trace_inner(u, v).norm() / d).max(0.0))
}

/// Embed a `2^k x 2^k` gate acting on `qubits` into the full `2^n` register.
pub fn embed(gate: &CMatrix, qubits: &[usize], n_qubits: usize) -> Result<CMatrix> {
    let dim = 1usize << n_qubits;
    let mut full = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        let mut basis = vec![ZERO; dim];
        basis[col] = ONE;
        apply_in_place(&mut basis, gate, qubits, n_qubits)?;
        for (row, z) in basis.into_iter().enumerate() {
            full[(row, col)] = z;
        }
    }
    Ok(full)
}

fn validate_targets(gate: &CMatrix, qubits: &[usize], n_qubits: usize) -> Result<()> {
    for (k, &q) in qubits.iter().enumerate() {
        if q >= n_qubits {
            return Err(Error::IndexOutOfRange { index: q, len: n_qubits });
        }
        if qubits[..k].contains(&q) {
            return Err(Error::InvalidInput(format!("qubit {q} listed twice")));
        }
    }
    let expected = 1usize << qubits.len();
    if gate.nrows() != expected || gate.ncols() != expected {
        return Err(Error::DimMismatch(format!(
            "gate is {}x{} but acts on {} qubit(s)",
            gate.nrows(),
            gate.ncols(),
            qubits.len()
        )));
    }
    Ok(())
}

/// Apply `gate` to the listed qubits of a raw amplitude vector. `qubits[0]`
/// is the most significant bit of the gate's local index.
pub fn apply_in_place(
    amps: &mut [C64],
    gate: &CMatrix,
    qubits: &[usize],
    n_qubits: usize,
) -> Result<()> {
    validate_targets(gate, qubits, n_qubits)?;
    if amps.len() != 1usize << n_qubits {
        return Err(Error::DimMismatch(format!(
            "state has {} amplitudes, expected {}",
            amps.len(),
            1usize << n_qubits
        )));
    }
    let k = qubits.len();
    let local = 1usize << k;
    let masks: Vec<usize> = qubits.iter().map(|&q| 1usize << (n_qubits - 1 - q)).collect();
    let all_mask: usize = masks.iter().sum();
    let offsets: Vec<usize> = (0..local)
        .map(|sub| {
            (0..k)
                .filter(|&j| sub & (1 << (k - 1 - j)) != 0)
                .map(|j| masks[j])
                .sum()
        })
        .collect();
    let mut buf = vec![ZERO; local];
    for base in 0..amps.len() {
        if base & all_mask != 0 {
            continue;
        }
        for (slot, off) in buf.iter_mut().zip(&offsets) {
            *slot = amps[base + off];
        }
        for (row, off) in offsets.iter().enumerate() {
            let mut acc = ZERO;
            for (col, b) in buf.iter().enumerate() {
                acc += gate[(row, col)] * b;
            }
            amps[base + off] = acc;
        }
    }
    Ok(())
}

/// A normalized `n`-qubit pure state.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl Statevector {
    pub const NORM_TOL: f64 = 1e-10;

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::IndexOutOfRange { index, len: dim });
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Ok(Self { n_qubits, amps })
    }

    /// Wraps amplitudes that must already be normalized.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        if !is_power_of_two(amps.len()) || amps.len() < 2 {
            return Err(Error::DimMismatch(format!(
                "{} amplitudes is not a qubit register",
                amps.len()
            )));
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::InvalidInput(format!("state norm {norm} is not 1")));
        }
        Ok(Self { n_qubits: amps.len().trailing_zeros() as usize, amps })
    }

    /// Normalizes before wrapping.
    pub fn normalized(mut amps: Vec<C64>) -> Result<Self> {
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidInput("cannot normalize zero vector".into()));
        }
        amps.iter_mut().for_each(|z| *z /= norm);
        Self::from_amplitudes(amps)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn apply_gate(&self, gate: &CMatrix, qubits: &[usize]) -> Result<Statevector> {
        let mut out = self.clone();
        apply_in_place(&mut out.amps, gate, qubits, self.n_qubits)?;
        Ok(out)
    }

    pub fn apply_matrix(&self, u: &CMatrix) -> Result<Statevector> {
        if u.nrows() != self.amps.len() || u.ncols() != self.amps.len() {
            return Err(Error::DimMismatch(format!(
                "operator is {}x{}, state has {} amplitudes",
                u.nrows(),
                u.ncols(),
                self.amps.len()
            )));
        }
        let v = nalgebra::DVector::from_column_slice(&self.amps);
        Ok(Self { n_qubits: self.n_qubits, amps: (u * v).as_slice().to_vec() })
    }

    /// `<psi|M|psi>` for a full-register operator.
    pub fn expectation(&self, m: &CMatrix) -> Result<C64> {
        let applied = self.apply_matrix(m)?;
        Ok(self.amps.iter().zip(&applied.amps).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn inner(&self, other: &Statevector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }
}
