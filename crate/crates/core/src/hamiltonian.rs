//! Nearest-neighbour Heisenberg chains with an optional uniform driven field.
//!
//! `H(t) = -sum_a J_a sum_i s^a_i s^a_{i+1} - h(t) sum_i s^b_i`, open boundary,
//! energies in eV and times in fs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, Axis, CMatrix, Statevector, C64, I, ONE, ZERO};
use crate::matchgate::Family;

/// Reduced Planck constant in eV fs.
pub const HBAR_EV_FS: f64 = 0.6582119569;

/// Largest chain for which dense `2^N x 2^N` matrices are built by default.
pub const DEFAULT_SIZE_CAP: usize = 7;

pub fn check_size(n_qubits: usize, cap: usize) -> Result<()> {
    if n_qubits > cap {
        return Err(Error::SizeCapExceeded { n_qubits, cap });
    }
    Ok(())
}

/// Field amplitude as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DriveSpec {
    Constant { h0: f64 },
    /// `h0 cos(omega t)`, `omega` in rad/fs.
    Cosine { h0: f64, omega: f64 },
    /// Piecewise-linear through the samples, held constant outside them.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl DriveSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("drive {what} must be finite")))
            }
        };
        match self {
            DriveSpec::Constant { h0 } => finite(*h0, "amplitude"),
            DriveSpec::Cosine { h0, omega } => {
                finite(*h0, "amplitude")?;
                finite(*omega, "frequency")
            }
            DriveSpec::Tabulated { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::InvalidInput(
                        "tabulated drive needs equal-length, non-empty times and values".into(),
                    ));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidInput("tabulated drive times must strictly increase".into()));
                }
                times.iter().chain(values).try_for_each(|v| finite(*v, "sample"))
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            DriveSpec::Constant { h0 } => *h0,
            DriveSpec::Cosine { h0, omega } => h0 * (omega * t).cos(),
            DriveSpec::Tabulated { times, values } => {
                let k = times.partition_point(|&x| x <= t);
                if k == 0 {
                    values[0]
                } else if k == times.len() {
                    values[k - 1]
                } else {
                    let (t0, t1) = (times[k - 1], times[k]);
                    let w = (t - t0) / (t1 - t0);
                    values[k - 1] * (1.0 - w) + values[k] * w
                }
            }
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match self {
            DriveSpec::Constant { .. } => true,
            DriveSpec::Cosine { h0, omega } => *h0 == 0.0 || *omega == 0.0,
            DriveSpec::Tabulated { values, .. } => values.iter().all(|v| *v == values[0]),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match self {
            DriveSpec::Constant { h0 } | DriveSpec::Cosine { h0, .. } => *h0 == 0.0,
            DriveSpec::Tabulated { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub axis: Axis,
    pub drive: DriveSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_spins: usize,
    /// Couplings `[Jx, Jy, Jz]` in eV.
    pub couplings: [f64; 3],
    pub field: Option<Field>,
}

impl ModelSpec {
    pub fn new(n_spins: usize, couplings: [f64; 3], field: Option<Field>) -> Result<Self> {
        let spec = Self { n_spins, couplings, field };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_spins < 2 {
            return Err(Error::InvalidInput(format!("chain needs at least 2 spins, got {}", self.n_spins)));
        }
        if self.couplings.iter().any(|j| !j.is_finite()) {
            return Err(Error::InvalidInput("couplings must be finite".into()));
        }
        if let Some(f) = &self.field {
            f.drive.validate()?;
        }
        Ok(())
    }

    pub fn coupling(&self, axis: Axis) -> f64 {
        self.couplings[axis as usize]
    }

    /// Field axis, ignoring drives that vanish at every time.
    pub fn active_field(&self) -> Option<Axis> {
        self.field.as_ref().filter(|f| !f.drive.is_identically_zero()).map(|f| f.axis)
    }

    pub fn field_at(&self, t: f64) -> f64 {
        self.field.as_ref().map_or(0.0, |f| f.drive.value(t))
    }

    pub fn is_time_independent(&self) -> bool {
        self.field.as_ref().is_none_or(|f| f.drive.is_time_independent())
    }
}

/// How a step's Hamiltonian is sampled from a time-dependent drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Step `k` (1-based) uses `H((k-1) dt)`.
    #[default]
    Left,
    /// Step `k` uses `H((k-1/2) dt)`.
    Midpoint,
}

/// Time step, unit convention and drive sampling for piecewise-constant
/// evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub hbar: f64,
    pub sampling: Sampling,
}

impl TimeGrid {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { dt, hbar: HBAR_EV_FS, sampling: Sampling::Left })
    }

    /// Time at which step `k` (1-based) samples the drive.
    pub fn sample_time(&self, step: usize) -> f64 {
        let k = step as f64;
        match self.sampling {
            Sampling::Left => (k - 1.0) * self.dt,
            Sampling::Midpoint => (k - 0.5) * self.dt,
        }
    }

    /// Rotation angle for energy `e` held for one step: `2 e dt / hbar`.
    pub fn angle(&self, energy: f64) -> f64 {
        2.0 * energy * self.dt / self.hbar
    }
}

/// Coupling sets that appear as columns of the eligibility table.
const COUPLING_SETS: [&str; 7] = ["Jx", "Jy", "Jz", "Jx+Jy", "Jx+Jz", "Jy+Jz", "Jx+Jy+Jz"];

fn coupling_set_name(mask: [bool; 3]) -> String {
    let names: Vec<&str> = ["Jx", "Jy", "Jz"].iter().zip(mask).filter(|(_, m)| *m).map(|(n, _)| *n).collect();
    if names.is_empty() {
        "none".into()
    } else {
        names.join("+")
    }
}

/// One cell of the (field row, coupling column) eligibility table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCell {
    /// `None` for the no-field row.
    pub field: Option<Axis>,
    pub couplings: String,
}

impl fmt::Display for TableCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = self.field.map_or("none", Axis::name);
        write!(f, "field {row} / couplings {}", self.couplings)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eligibility {
    pub eligible: bool,
    pub family: Option<Family>,
    pub cell: TableCell,
    pub reason: String,
}

impl fmt::Display for Eligibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Some(fam) if self.eligible => {
                write!(f, "eligible, family {} {} ({})", fam, fam.label(), self.cell)
            }
            _ => write!(f, "ineligible: {} ({})", self.reason, self.cell),
        }
    }
}

/// Decides constant-depth eligibility from which couplings are nonzero and
/// which field axis is driven.
pub fn classify_cell(mask: [bool; 3], field: Option<Axis>) -> Eligibility {
    use Family::*;
    let cell = TableCell { field, couplings: coupling_set_name(mask) };
    let count = mask.iter().filter(|m| **m).count();
    let family = match (field, mask) {
        (_, [true, true, true]) => None,
        (None, [false, false, false]) | (None, [true, false, false]) => Some(F1),
        (None, [false, true, false]) => Some(F2),
        (None, [false, false, true]) => Some(F3),
        (None, [true, true, false]) => Some(F7),
        (None, [true, false, true]) => Some(F8),
        (None, [false, true, true]) => Some(F9),
        (Some(Axis::X), [_, false, false]) => Some(F4),
        (Some(Axis::Y), [false, _, false]) => Some(F5),
        (Some(Axis::Z), [false, false, _]) => Some(F6),
        (Some(Axis::X), [false, _, _]) => Some(F12),
        (Some(Axis::Y), [_, false, _]) => Some(F11),
        (Some(Axis::Z), [_, _, false]) => Some(F10),
        _ => None,
    };
    let reason = match family {
        Some(fam) => format!("maps to {fam}"),
        None if count == 3 => "JxJyJz != 0".into(),
        None => format!(
            "field along {} is parallel to one of the couplings {}",
            field.map_or("none", Axis::name),
            cell.couplings
        ),
    };
    Eligibility { eligible: family.is_some(), family, cell, reason }
}

pub fn classify(spec: &ModelSpec) -> Eligibility {
    let mask = spec.couplings.map(|j| j != 0.0);
    classify_cell(mask, spec.active_field())
}

/// Every (field row, coupling column) cell of the eligibility table, in
/// row-major order: rows none, x, y, z; columns as in `COUPLING_SETS`.
pub fn table_cells() -> Vec<(Option<Axis>, [bool; 3])> {
    let rows = [None, Some(Axis::X), Some(Axis::Y), Some(Axis::Z)];
    let masks = COUPLING_SETS.map(|name| ["Jx", "Jy", "Jz"].map(|a| name.split('+').any(|p| p == a)));
    rows.iter().flat_map(|r| masks.iter().map(move |m| (*r, *m))).collect()
}

/// Adds `coeff * prod_k sigma^{axis_k}_{qubit_k}` to `h`.
fn add_pauli_term(h: &mut CMatrix, n: usize, term: &[(usize, Axis)], coeff: f64) {
    let dim = 1usize << n;
    for col in 0..dim {
        let mut row = col;
        let mut amp = ONE;
        for &(q, axis) in term {
            let bit = (col >> (n - 1 - q)) & 1;
            match axis {
                Axis::X => row ^= 1 << (n - 1 - q),
                Axis::Y => {
                    row ^= 1 << (n - 1 - q);
                    amp *= if bit == 0 { I } else { -I };
                }
                Axis::Z => {
                    if bit == 1 {
                        amp = -amp;
                    }
                }
            }
        }
        h[(row, col)] += amp * coeff;
    }
}

/// Dense Hamiltonian at time `t` with the default size cap.
pub fn hamiltonian_matrix(spec: &ModelSpec, t: f64) -> Result<CMatrix> {
    hamiltonian_matrix_capped(spec, t, DEFAULT_SIZE_CAP)
}

pub fn hamiltonian_matrix_capped(spec: &ModelSpec, t: f64, cap: usize) -> Result<CMatrix> {
    spec.validate()?;
    let n = spec.n_spins;
    check_size(n, cap)?;
    let mut h = CMatrix::from_element(1 << n, 1 << n, ZERO);
    for axis in Axis::ALL {
        let j = spec.coupling(axis);
        if j != 0.0 {
            for i in 0..n - 1 {
                add_pauli_term(&mut h, n, &[(i, axis), (i + 1, axis)], -j);
            }
        }
    }
    if let Some(f) = &spec.field {
        let hv = f.drive.value(t);
        if hv != 0.0 {
            for i in 0..n {
                add_pauli_term(&mut h, n, &[(i, f.axis)], -hv);
            }
        }
    }
    Ok(h)
}

/// Lowest-energy eigenvector, phase-fixed so its first nonzero amplitude is
/// real and positive. Within a degenerate ground space the eigenvector whose
/// dominant amplitude sits at the lowest basis index wins.
pub fn ground_state(h: &CMatrix) -> Result<Statevector> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let deg_tol = 1e-9 * scale;
    let dominant = |k: usize| {
        let col = vecs.column(k);
        let max = col.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        col.iter().position(|z| z.norm() >= max - 1e-12).unwrap_or(0)
    };
    let pick = (0..vals.len())
        .take_while(|&k| vals[k] - vals[0] <= deg_tol)
        .min_by_key(|&k| (dominant(k), k))
        .unwrap_or(0);
    let mut amps: Vec<C64> = vecs.column(pick).iter().copied().collect();
    if let Some(first) = amps.iter().find(|z| z.norm() > 1e-12).copied() {
        let phase = first.conj() / first.norm();
        amps.iter_mut().for_each(|z| *z *= phase);
    }
    Statevector::normalized(amps)
}
