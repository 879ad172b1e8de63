//! Circuit representation, naive Trotter layouts and the constant-depth
//! template.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ansatz::{Slot, Structure};
use crate::error::{Error, Result};
use crate::hamiltonian::{check_size, classify, ModelSpec, TimeGrid, DEFAULT_SIZE_CAP};
use crate::linalg::{apply_in_place, Axis, CMatrix, C64, ZERO};
use crate::matchgate::{Family, GGate, NativeGate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Placement {
    /// Family gate on `(site, site + 1)`.
    Gate { site: usize, gate: GGate },
    Native(NativeGate),
}

impl Placement {
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Placement::Gate { site, .. } => vec![*site, site + 1],
            Placement::Native(g) => g.qubits(),
        }
    }

    pub fn matrix(&self) -> CMatrix {
        match self {
            Placement::Gate { gate, .. } => gate.matrix(),
            Placement::Native(g) => g.matrix(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Circuit {
    n_qubits: usize,
    placements: Vec<Placement>,
    pub metadata: BTreeMap<String, String>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits, placements: Vec::new(), metadata: BTreeMap::new() }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    pub fn push_gate(&mut self, site: usize, gate: GGate) -> Result<()> {
        if site + 1 >= self.n_qubits {
            return Err(Error::IndexOutOfRange { index: site + 1, len: self.n_qubits });
        }
        self.placements.push(Placement::Gate { site, gate });
        Ok(())
    }

    pub fn push_native(&mut self, gate: NativeGate) -> Result<()> {
        let qs = gate.qubits();
        if let Some(&q) = qs.iter().find(|&&q| q >= self.n_qubits) {
            return Err(Error::IndexOutOfRange { index: q, len: self.n_qubits });
        }
        if let [a, b] = qs[..] {
            if a == b || a.abs_diff(b) != 1 {
                return Err(Error::InvalidInput(format!("two-qubit gate on non-adjacent qubits {a}, {b}")));
            }
        }
        self.placements.push(Placement::Native(gate));
        Ok(())
    }

    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::DimMismatch(format!(
                "cannot append a {}-qubit circuit to a {}-qubit one",
                other.n_qubits, self.n_qubits
            )));
        }
        self.placements.extend(other.placements.iter().cloned());
        Ok(())
    }

    pub fn gate_count(&self) -> usize {
        self.placements.iter().filter(|p| matches!(p, Placement::Gate { .. })).count()
    }

    /// Two CNOTs per family gate plus explicit CNOTs.
    pub fn cnot_count(&self) -> usize {
        self.placements
            .iter()
            .map(|p| match p {
                Placement::Gate { .. } => 2,
                Placement::Native(g) if g.is_cnot() => 1,
                Placement::Native(_) => 0,
            })
            .sum()
    }

    /// Same circuit with every family gate replaced by its native
    /// decomposition.
    pub fn decomposed(&self) -> Circuit {
        let mut out = Circuit::new(self.n_qubits);
        out.metadata = self.metadata.clone();
        for p in &self.placements {
            match p {
                Placement::Gate { site, gate } => {
                    out.placements.extend(gate.decompose_on(*site).into_iter().map(Placement::Native))
                }
                Placement::Native(g) => out.placements.push(Placement::Native(*g)),
            }
        }
        out
    }

    /// Product of all placements, first placement rightmost.
    pub fn unitary(&self) -> Result<CMatrix> {
        self.unitary_capped(DEFAULT_SIZE_CAP)
    }

    pub fn unitary_capped(&self, cap: usize) -> Result<CMatrix> {
        check_size(self.n_qubits, cap)?;
        let d = 1usize << self.n_qubits;
        let mats: Vec<(CMatrix, Vec<usize>)> = self.placements.iter().map(|p| (p.matrix(), p.qubits())).collect();
        let mut u = CMatrix::from_element(d, d, ZERO);
        let mut col = vec![ZERO; d];
        for j in 0..d {
            col.iter_mut().for_each(|z| *z = ZERO);
            col[j] = C64::new(1.0, 0.0);
            for (m, qs) in &mats {
                apply_in_place(&mut col, m, qs, self.n_qubits)?;
            }
            u.column_mut(j).iter_mut().zip(&col).for_each(|(dst, src)| *dst = *src);
        }
        Ok(u)
    }

    /// Applies the circuit to a state vector in place.
    pub fn apply(&self, amps: &mut [C64]) -> Result<()> {
        for p in &self.placements {
            apply_in_place(amps, &p.matrix(), &p.qubits(), self.n_qubits)?;
        }
        Ok(())
    }
}

/// Sites covered by brickwork column `c` on `n` qubits.
pub fn column_sites(n_qubits: usize, column: usize) -> Vec<usize> {
    (column % 2..n_qubits.saturating_sub(1)).step_by(2).collect()
}

/// Per-step gate angles for the pure-coupling gates of `family`.
fn coupling_gate(family: Family, spec: &ModelSpec, grid: &TimeGrid) -> Result<GGate> {
    let theta = spec.couplings.map(|j| -grid.angle(j));
    let fam = family.coupling_only();
    GGate::new(fam, fam.coupling_angles(theta)?)
}

/// Family tag of an eligible spec, or `IneligibleModel`.
pub fn eligible_family(spec: &ModelSpec) -> Result<Family> {
    let elig = classify(spec);
    match (elig.eligible, elig.family) {
        (true, Some(f)) => Ok(f),
        _ => Err(Error::IneligibleModel(elig.reason)),
    }
}

fn push_step(c: &mut Circuit, spec: &ModelSpec, grid: &TimeGrid, gate: &GGate, step: usize) -> Result<()> {
    let n = spec.n_spins;
    if let (Some(field), Some(axis)) = (&spec.field, spec.active_field()) {
        let angle = -grid.angle(field.drive.value(grid.sample_time(step)));
        for q in 0..n {
            c.push_native(NativeGate::rot(axis, q, angle))?;
        }
    }
    for column in 0..2 {
        for site in column_sites(n, column) {
            c.push_gate(site, gate.clone())?;
        }
    }
    Ok(())
}

/// Circuit for Trotter step `step` (1-based) alone.
pub fn naive_step(spec: &ModelSpec, grid: &TimeGrid, step: usize) -> Result<Circuit> {
    let family = eligible_family(spec)?;
    let gate = coupling_gate(family, spec, grid)?;
    let mut c = Circuit::new(spec.n_spins);
    push_step(&mut c, spec, grid, &gate, step)?;
    Ok(c)
}

/// First-order Trotter circuit: each step applies the field rotation
/// column, then the gates on sites 0, 2, ..., then the gates on 1, 3, ....
pub fn naive_circuit(spec: &ModelSpec, grid: &TimeGrid, n_steps: usize) -> Result<Circuit> {
    let family = eligible_family(spec)?;
    let gate = coupling_gate(family, spec, grid)?;
    let mut c = Circuit::new(spec.n_spins);
    c.metadata.insert("kind".into(), "naive".into());
    c.metadata.insert("family".into(), family.to_string());
    c.metadata.insert("steps".into(), n_steps.to_string());
    for step in 1..=n_steps {
        push_step(&mut c, spec, grid, &gate, step)?;
    }
    Ok(c)
}

/// Fixed-depth structure: `N` brickwork columns of family gates, column `c`
/// starting at qubit `c mod 2`. Families with a field also get a column of
/// single-qubit field rotations on every qubit before and after the gates.
/// Two qubits use a single gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    n_qubits: usize,
    family: Family,
    frame: Option<Axis>,
    columns: Vec<Vec<usize>>,
}

impl Template {
    pub fn new(n_qubits: usize, family: Family) -> Result<Self> {
        if n_qubits < 2 {
            return Err(Error::InvalidInput(format!("template needs at least 2 qubits, got {n_qubits}")));
        }
        let columns = if n_qubits == 2 {
            vec![vec![0]]
        } else {
            (0..n_qubits).map(|c| column_sites(n_qubits, c)).collect()
        };
        Ok(Self { n_qubits, family, frame: family.field_axis(), columns })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Axis of the framing rotation columns, if any.
    pub fn frame_axis(&self) -> Option<Axis> {
        self.frame
    }

    pub fn columns(&self) -> &[Vec<usize>] {
        &self.columns
    }

    pub fn gate_count(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn cnot_count(&self) -> usize {
        2 * self.gate_count()
    }

    fn frame_len(&self) -> usize {
        if self.frame.is_some() {
            self.n_qubits
        } else {
            0
        }
    }

    pub fn param_count(&self) -> usize {
        self.family.arity() * self.gate_count() + 2 * self.frame_len()
    }

    /// Slot layout: leading frame, gates column by column, trailing frame.
    pub fn structure(&self) -> Structure {
        let frame: Vec<Slot> = self
            .frame
            .map(|axis| (0..self.n_qubits).map(|qubit| Slot::Rotation { qubit, axis }).collect())
            .unwrap_or_default();
        let mut slots = frame.clone();
        for col in &self.columns {
            slots.extend(col.iter().map(|&site| Slot::Gate { site, family: self.family }));
        }
        slots.extend(frame);
        Structure { n_qubits: self.n_qubits, slots }
    }

    /// Parameters that make the template the identity.
    pub fn identity_params(&self) -> Vec<f64> {
        vec![0.0; self.param_count()]
    }

    pub fn instantiate(&self, params: &[f64]) -> Result<Circuit> {
        if params.len() != self.param_count() {
            return Err(Error::InvalidInput(format!(
                "template takes {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let structure = self.structure();
        let mut c = Circuit::new(self.n_qubits);
        c.metadata.insert("kind".into(), "constant-depth".into());
        c.metadata.insert("family".into(), self.family.to_string());
        for (slot, angles) in structure.slots.iter().zip(structure.split_params(params)) {
            match *slot {
                Slot::Gate { site, family } => c.push_gate(site, GGate::new(family, angles.to_vec())?)?,
                Slot::Rotation { qubit, axis } => c.push_native(NativeGate::rot(axis, qubit, angles[0]))?,
            }
        }
        Ok(c)
    }

    /// Template parameters reproducing one naive Trotter step: the field
    /// column goes to the leading frame, the two bond columns to the first
    /// two gate columns, everything else is the identity. Requires the
    /// step's gates to be representable in the template family.
    pub fn trotter_step_params(&self, spec: &ModelSpec, grid: &TimeGrid, step: usize) -> Result<Vec<f64>> {
        let theta = spec.couplings.map(|j| -grid.angle(j));
        let gate_angles = self.family.coupling_angles(theta)?;
        let mut params = self.identity_params();
        let frame = self.frame_len();
        if let (Some(axis), Some(field)) = (self.frame, &spec.field) {
            if spec.active_field() == Some(axis) {
                let angle = -grid.angle(field.drive.value(grid.sample_time(step)));
                params[..frame].iter_mut().for_each(|p| *p = angle);
            }
        }
        let arity = self.family.arity();
        let mut k = frame;
        let bond_columns = if self.n_qubits == 2 { 1 } else { 2 };
        for (c, col) in self.columns.iter().enumerate() {
            for _ in col {
                if c < bond_columns {
                    params[k..k + arity].copy_from_slice(&gate_angles);
                }
                k += arity;
            }
        }
        Ok(params)
    }
}
