//! Matchgate algebra and the twelve parameterized two-qubit gate families.
//!
//! A matchgate `G(A, B)` acts as `A` on the outer span `{|00>, |11>}` and as
//! `B` on the inner span `{|01>, |10>}`, with `det A = det B`.
//!
//! Every family gate is a product of exponentials `exp(-i theta/2 P)` of
//! two-qubit Pauli generators, listed in [`Family::generators`]. The closed
//! forms in [`GGate::matrix`] are written out entry by entry; the generator
//! product in [`GGate::generator_matrix`] is an independent route to the
//! same matrix and is what the optimizer differentiates.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Axis, CMatrix, C64, I, ONE, ZERO};

pub(crate) type Mat4 = [[C64; 4]; 4];

pub(crate) const ID4: Mat4 = [
    [ONE, ZERO, ZERO, ZERO],
    [ZERO, ONE, ZERO, ZERO],
    [ZERO, ZERO, ONE, ZERO],
    [ZERO, ZERO, ZERO, ONE],
];

pub(crate) fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = (0..4).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

pub(crate) fn mat4_to_matrix(m: &Mat4) -> CMatrix {
    CMatrix::from_fn(4, 4, |r, c| m[r][c])
}

/// Two-qubit Pauli generator of one factor `exp(-i theta/2 P)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// `sigma^a (x) sigma^a`
    Coupling(Axis),
    /// `sigma^a (x) I + I (x) sigma^a`, i.e. the same rotation on both wires
    Field(Axis),
}

fn pauli2(axis: Axis) -> [[C64; 2]; 2] {
    match axis {
        Axis::X => [[ZERO, ONE], [ONE, ZERO]],
        Axis::Y => [[ZERO, -I], [I, ZERO]],
        Axis::Z => [[ONE, ZERO], [ZERO, -ONE]],
    }
}

fn kron2(a: &[[C64; 2]; 2], b: &[[C64; 2]; 2]) -> Mat4 {
    let mut out = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = a[r >> 1][c >> 1] * b[r & 1][c & 1];
        }
    }
    out
}

const ID2: [[C64; 2]; 2] = [[ONE, ZERO], [ZERO, ONE]];

/// `R_a(theta) = exp(-i theta sigma^a / 2)`.
pub fn rotation2(axis: Axis, theta: f64) -> [[C64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    let p = pauli2(axis);
    let mut out = [[ZERO; 2]; 2];
    for r in 0..2 {
        for k in 0..2 {
            let id = if r == k { C64::new(c, 0.0) } else { ZERO };
            out[r][k] = id - I * s * p[r][k];
        }
    }
    out
}

impl Generator {
    pub(crate) fn matrix(self) -> Mat4 {
        match self {
            Generator::Coupling(a) => kron2(&pauli2(a), &pauli2(a)),
            Generator::Field(a) => {
                let l = kron2(&pauli2(a), &ID2);
                let r = kron2(&ID2, &pauli2(a));
                let mut out = [[ZERO; 4]; 4];
                for i in 0..4 {
                    for j in 0..4 {
                        out[i][j] = l[i][j] + r[i][j];
                    }
                }
                out
            }
        }
    }

    /// `exp(-i theta/2 P)`.
    pub(crate) fn exp(self, theta: f64) -> Mat4 {
        match self {
            Generator::Coupling(_) => {
                let (s, c) = (theta / 2.0).sin_cos();
                let p = self.matrix();
                let mut out = [[ZERO; 4]; 4];
                for r in 0..4 {
                    for k in 0..4 {
                        let id = if r == k { C64::new(c, 0.0) } else { ZERO };
                        out[r][k] = id - I * s * p[r][k];
                    }
                }
                out
            }
            Generator::Field(a) => {
                let r = rotation2(a, theta);
                kron2(&r, &r)
            }
        }
    }
}

/// The twelve gate families, one per group of eligible Hamiltonians.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
    F7,
    F8,
    F9,
    F10,
    F11,
    F12,
}

impl Family {
    pub const ALL: [Family; 12] = [
        Family::F1,
        Family::F2,
        Family::F3,
        Family::F4,
        Family::F5,
        Family::F6,
        Family::F7,
        Family::F8,
        Family::F9,
        Family::F10,
        Family::F11,
        Family::F12,
    ];

    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn from_number(n: usize) -> Option<Family> {
        Family::ALL.get(n.checked_sub(1)?).copied()
    }

    pub fn arity(self) -> usize {
        match self {
            Family::F1 | Family::F2 | Family::F3 => 1,
            Family::F10 | Family::F11 | Family::F12 => 4,
            _ => 2,
        }
    }

    /// Hamiltonian terms served by this family.
    pub fn label(self) -> &'static str {
        match self {
            Family::F1 => "XX",
            Family::F2 => "YY",
            Family::F3 => "ZZ",
            Family::F4 => "XX+hx",
            Family::F5 => "YY+hy",
            Family::F6 => "ZZ+hz",
            Family::F7 => "XX+YY",
            Family::F8 => "XX+ZZ",
            Family::F9 => "YY+ZZ",
            Family::F10 => "{XX|YY|XX+YY}+hz",
            Family::F11 => "{XX|ZZ|XX+ZZ}+hy",
            Family::F12 => "{YY|ZZ|YY+ZZ}+hx",
        }
    }

    pub fn field_axis(self) -> Option<Axis> {
        match self {
            Family::F4 | Family::F12 => Some(Axis::X),
            Family::F5 | Family::F11 => Some(Axis::Y),
            Family::F6 | Family::F10 => Some(Axis::Z),
            _ => None,
        }
    }

    /// Families whose matrices carry the outer/inner block pattern directly.
    /// The x- and y-field families only do so after their field layers are
    /// stripped.
    pub fn is_matchgate_form(self) -> bool {
        !matches!(self, Family::F4 | Family::F5 | Family::F11 | Family::F12)
    }

    /// Factors `(angle slot, generator)` in application order.
    pub fn generators(self) -> &'static [(usize, Generator)] {
        use Axis::*;
        use Generator::*;
        match self {
            Family::F1 => &[(0, Coupling(X))],
            Family::F2 => &[(0, Coupling(Y))],
            Family::F3 => &[(0, Coupling(Z))],
            Family::F4 => &[(0, Field(X)), (1, Coupling(X))],
            Family::F5 => &[(0, Field(Y)), (1, Coupling(Y))],
            Family::F6 => &[(0, Field(Z)), (1, Coupling(Z))],
            Family::F7 => &[(0, Coupling(X)), (1, Coupling(Y))],
            Family::F8 => &[(0, Coupling(X)), (1, Coupling(Z))],
            Family::F9 => &[(0, Coupling(Y)), (1, Coupling(Z))],
            Family::F10 => &[(0, Field(Z)), (1, Coupling(X)), (2, Coupling(Y)), (3, Field(Z))],
            Family::F11 => &[(0, Field(Y)), (1, Coupling(X)), (2, Coupling(Z)), (3, Field(Y))],
            Family::F12 => &[(0, Field(X)), (1, Coupling(Y)), (2, Coupling(Z)), (3, Field(X))],
        }
    }

    /// Angle vector of a pure-coupling gate (field slots zero) given the
    /// per-axis coupling angles. Couplings the family cannot carry must be 0.
    pub fn coupling_angles(self, theta: [f64; 3]) -> Result<Vec<f64>> {
        let mut angles = vec![0.0; self.arity()];
        let mut used = [false; 3];
        for &(slot, gen) in self.generators() {
            if let Generator::Coupling(axis) = gen {
                angles[slot] = theta[axis as usize];
                used[axis as usize] = true;
            }
        }
        for axis in Axis::ALL {
            if !used[axis as usize] && theta[axis as usize] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "family {self} has no {axis}{axis} coupling"
                )));
            }
        }
        Ok(angles)
    }

    /// Family of the pure-coupling gates used when the field is applied as
    /// a separate rotation column.
    pub fn coupling_only(self) -> Family {
        match self {
            Family::F4 => Family::F1,
            Family::F5 => Family::F2,
            Family::F6 => Family::F3,
            Family::F10 => Family::F7,
            Family::F11 => Family::F8,
            Family::F12 => Family::F9,
            other => other,
        }
    }

    /// The family with field layers removed (x/y-field families only).
    pub fn stripped(self) -> Option<Family> {
        match self {
            Family::F4 => Some(Family::F1),
            Family::F5 => Some(Family::F2),
            Family::F10 => Some(Family::F7),
            Family::F11 => Some(Family::F8),
            Family::F12 => Some(Family::F9),
            _ => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.number())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let digits = t.strip_prefix('F').or_else(|| t.strip_prefix('f')).unwrap_or(t);
        digits
            .parse::<usize>()
            .ok()
            .and_then(Family::from_number)
            .ok_or_else(|| Error::InvalidInput(format!("unknown family `{s}`")))
    }
}

/// A family gate with its angle vector (radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GGate {
    family: Family,
    angles: Vec<f64>,
}

impl GGate {
    pub fn new(family: Family, angles: Vec<f64>) -> Result<Self> {
        if angles.len() != family.arity() {
            return Err(Error::ArityMismatch {
                family: family.to_string(),
                expected: family.arity(),
                got: angles.len(),
            });
        }
        Ok(Self { family, angles })
    }

    pub fn identity(family: Family) -> Self {
        Self { family, angles: vec![0.0; family.arity()] }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Closed-form matrix, entry by entry.
    pub fn matrix(&self) -> CMatrix {
        mat4_to_matrix(&self.closed_form())
    }

    pub(crate) fn closed_form(&self) -> Mat4 {
        let th = &self.angles;
        let cis = |phi: f64| C64::from_polar(1.0, phi);
        let cs = |t: f64| {
            let (s, c) = (t / 2.0).sin_cos();
            (C64::new(c, 0.0), C64::new(s, 0.0))
        };
        let o = ZERO;
        match self.family {
            Family::F1 => {
                let (c, s) = cs(th[0]);
                [[c, o, o, -I * s], [o, c, -I * s, o], [o, -I * s, c, o], [-I * s, o, o, c]]
            }
            Family::F2 => {
                let (c, s) = cs(th[0]);
                [[c, o, o, I * s], [o, c, -I * s, o], [o, -I * s, c, o], [I * s, o, o, c]]
            }
            Family::F3 => {
                let (m, p) = (cis(-th[0] / 2.0), cis(th[0] / 2.0));
                [[m, o, o, o], [o, p, o, o], [o, o, p, o], [o, o, o, m]]
            }
            Family::F4 | Family::F5 => {
                let (t0, t1) = (th[0], th[1]);
                let (c0, s0) = cs(t0);
                let (c1, s1) = cs(t1);
                let a = c0 * c0 * c1 + I * s0 * s0 * s1;
                let b = -s0 * s0 * c1 - I * c0 * c0 * s1;
                let c = -0.5 * I * cis(-t1 / 2.0) * t0.sin();
                if self.family == Family::F4 {
                    [[a, c, c, b], [c, a, b, c], [c, b, a, c], [b, c, c, a]]
                } else {
                    let d = -I * c;
                    [[a, d, d, -b], [-d, a, b, d], [-d, b, a, d], [-b, -d, -d, a]]
                }
            }
            Family::F6 => {
                let (t0, t2) = (th[0], th[1]);
                let p = cis(t2 / 2.0);
                [
                    [cis(-t2 / 2.0 - t0), o, o, o],
                    [o, p, o, o],
                    [o, o, p, o],
                    [o, o, o, cis(-t2 / 2.0 + t0)],
                ]
            }
            Family::F7 => {
                let (co, so) = cs(th[0] - th[1]);
                let (ci, si) = cs(th[0] + th[1]);
                [
                    [co, o, o, -I * so],
                    [o, ci, -I * si, o],
                    [o, -I * si, ci, o],
                    [-I * so, o, o, co],
                ]
            }
            Family::F8 | Family::F9 => {
                let (c, s) = cs(th[0]);
                let (m, p) = (cis(-th[1] / 2.0), cis(th[1] / 2.0));
                let corner = if self.family == Family::F8 { -I } else { I };
                [
                    [m * c, o, o, corner * m * s],
                    [o, p * c, -I * p * s, o],
                    [o, -I * p * s, p * c, o],
                    [corner * m * s, o, o, m * c],
                ]
            }
            Family::F10 => {
                let (t0, t1, t2, t3) = (th[0], th[1], th[2], th[3]);
                let (co, so) = cs(t1 - t2);
                let (ci, si) = cs(t1 + t2);
                [
                    [cis(-(t0 + t3)) * co, o, o, -I * cis(t0 - t3) * so],
                    [o, ci, -I * si, o],
                    [o, -I * si, ci, o],
                    [-I * cis(-(t0 - t3)) * so, o, o, cis(t0 + t3) * co],
                ]
            }
            Family::F11 | Family::F12 => {
                let (t0, t1, t2, t3) = (th[0], th[1], th[2], th[3]);
                let cp = ((t1 + t2) / 2.0).cos();
                let sp = ((t1 + t2) / 2.0).sin();
                let cm = ((t1 - t2) / 2.0).cos();
                let sm = ((t1 - t2) / 2.0).sin();
                let e = C64::new(0.5 * (cp + cm * (t0 + t3).cos()), -0.5 * (sp - sm * (t0 - t3).cos()));
                let f = C64::new(0.5 * (cp - cm * (t0 + t3).cos()), -0.5 * (sp + sm * (t0 - t3).cos()));
                let g = C64::new(-0.5 * cm * (t0 + t3).sin(), -0.5 * sm * (t0 - t3).sin());
                let (ec, fc) = (e.conj(), f.conj());
                if self.family == Family::F11 {
                    let gc = g.conj();
                    [[e, g, g, f], [-gc, ec, -fc, gc], [-gc, -fc, ec, gc], [f, -g, -g, e]]
                } else {
                    let h = I * g;
                    let hc = h.conj();
                    [[e, h, h, -f], [-hc, ec, -fc, -hc], [-hc, -fc, ec, -hc], [-f, h, h, e]]
                }
            }
        }
    }

    /// Product of the generator exponentials; equals [`GGate::matrix`].
    pub fn generator_matrix(&self) -> CMatrix {
        mat4_to_matrix(&self.generator_product())
    }

    pub(crate) fn generator_product(&self) -> Mat4 {
        self.family
            .generators()
            .iter()
            .fold(ID4, |acc, &(slot, gen)| mat4_mul(&gen.exp(self.angles[slot]), &acc))
    }

    /// Gate matrix plus its partial derivative with respect to each angle.
    pub(crate) fn matrix_and_jacobian(family: Family, angles: &[f64]) -> (Mat4, Vec<Mat4>) {
        let gens = family.generators();
        let factors: Vec<Mat4> = gens.iter().map(|&(slot, g)| g.exp(angles[slot])).collect();
        // prefix[k] = factors[k-1] ... factors[0]
        let mut prefix = Vec::with_capacity(gens.len() + 1);
        prefix.push(ID4);
        for f in &factors {
            let last = prefix.last().unwrap();
            prefix.push(mat4_mul(f, last));
        }
        let mut jac = vec![[[ZERO; 4]; 4]; family.arity()];
        let mut suffix = ID4; // factors[K-1] ... factors[k+1]
        for k in (0..gens.len()).rev() {
            let (slot, gen) = gens[k];
            // d/dtheta exp(-i theta/2 P) = (-i/2) P exp(-i theta/2 P)
            let p = gen.matrix();
            let mut dp = mat4_mul(&p, &factors[k]);
            for row in dp.iter_mut() {
                for z in row.iter_mut() {
                    *z *= -0.5 * I;
                }
            }
            let term = mat4_mul(&suffix, &mat4_mul(&dp, &prefix[k]));
            for r in 0..4 {
                for c in 0..4 {
                    jac[slot][r][c] += term[r][c];
                }
            }
            suffix = mat4_mul(&suffix, &factors[k]);
        }
        (*prefix.last().unwrap(), jac)
    }

    /// Two-CNOT native decomposition acting on `(q, q+1)`, in application
    /// order. Control sits on `q`.
    pub fn decompose_on(&self, q: usize) -> Vec<NativeGate> {
        use NativeGate::*;
        let (a, b) = (q, q + 1);
        let th = &self.angles;
        let pair = |axis: Axis, angle: f64| [NativeGate::rot(axis, a, angle), NativeGate::rot(axis, b, angle)];
        let cx = Cnot { control: a, target: b };
        let mut out = Vec::new();
        // core: CNOT, rotation(s), CNOT, optionally wrapped in a basis change
        let core = |out: &mut Vec<NativeGate>, top: Option<f64>, bottom: Option<f64>| {
            out.push(cx);
            if let Some(t) = top {
                out.push(Rx { qubit: a, angle: t });
            }
            if let Some(t) = bottom {
                out.push(Rz { qubit: b, angle: t });
            }
            out.push(cx);
        };
        let wrap = |out: &mut Vec<NativeGate>, axis: Axis, top: Option<f64>, bottom: Option<f64>| {
            out.extend(pair(axis, FRAC_PI_2));
            core(out, top, bottom);
            out.extend(pair(axis, -FRAC_PI_2));
        };
        match self.family {
            Family::F1 => core(&mut out, Some(th[0]), None),
            Family::F2 => wrap(&mut out, Axis::Z, Some(th[0]), None),
            Family::F3 => core(&mut out, None, Some(th[0])),
            Family::F4 => {
                out.extend(pair(Axis::X, th[0]));
                core(&mut out, Some(th[1]), None);
            }
            Family::F5 => {
                out.extend(pair(Axis::Y, th[0]));
                wrap(&mut out, Axis::Z, Some(th[1]), None);
            }
            Family::F6 => {
                out.extend(pair(Axis::Z, th[0]));
                core(&mut out, None, Some(th[1]));
            }
            Family::F7 => wrap(&mut out, Axis::X, Some(th[0]), Some(th[1])),
            Family::F8 => core(&mut out, Some(th[0]), Some(th[1])),
            Family::F9 => wrap(&mut out, Axis::Z, Some(th[0]), Some(th[1])),
            Family::F10 => {
                out.extend(pair(Axis::Z, th[0]));
                wrap(&mut out, Axis::X, Some(th[1]), Some(th[2]));
                out.extend(pair(Axis::Z, th[3]));
            }
            Family::F11 => {
                out.extend(pair(Axis::Y, th[0]));
                core(&mut out, Some(th[1]), Some(th[2]));
                out.extend(pair(Axis::Y, th[3]));
            }
            Family::F12 => {
                out.extend(pair(Axis::X, th[0]));
                wrap(&mut out, Axis::Z, Some(th[1]), Some(th[2]));
                out.extend(pair(Axis::X, th[3]));
            }
        }
        out
    }

    pub fn decompose(&self) -> Vec<NativeGate> {
        self.decompose_on(0)
    }

    /// Gate matrix with the field layers removed; only defined for the
    /// families that are not already in matchgate form, plus F10.
    pub fn strip_field_layers(&self) -> Result<CMatrix> {
        let target = match self.family {
            Family::F4 | Family::F5 | Family::F10 | Family::F11 | Family::F12 => {
                self.family.stripped().unwrap()
            }
            other => return Err(Error::FamilyMismatch(other.to_string())),
        };
        let angles = match self.family {
            Family::F4 | Family::F5 => vec![self.angles[1]],
            _ => vec![self.angles[1], self.angles[2]],
        };
        Ok(GGate::new(target, angles)?.matrix())
    }
}

impl fmt::Display for GGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.family)?;
        for (k, a) in self.angles.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// Hardware-native gates. Rotations follow `R_a(theta) = exp(-i theta sigma^a / 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NativeGate {
    Rx { qubit: usize, angle: f64 },
    Ry { qubit: usize, angle: f64 },
    Rz { qubit: usize, angle: f64 },
    Cnot { control: usize, target: usize },
}

impl NativeGate {
    pub fn rot(axis: Axis, qubit: usize, angle: f64) -> Self {
        match axis {
            Axis::X => NativeGate::Rx { qubit, angle },
            Axis::Y => NativeGate::Ry { qubit, angle },
            Axis::Z => NativeGate::Rz { qubit, angle },
        }
    }

    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            NativeGate::Rx { qubit, .. } | NativeGate::Ry { qubit, .. } | NativeGate::Rz { qubit, .. } => {
                vec![qubit]
            }
            NativeGate::Cnot { control, target } => vec![control, target],
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            NativeGate::Rx { angle, .. } | NativeGate::Ry { angle, .. } | NativeGate::Rz { angle, .. } => {
                Some(angle)
            }
            NativeGate::Cnot { .. } => None,
        }
    }

    pub fn is_cnot(&self) -> bool {
        matches!(self, NativeGate::Cnot { .. })
    }

    /// Matrix on `self.qubits()` in that order.
    pub fn matrix(&self) -> CMatrix {
        match *self {
            NativeGate::Rx { angle, .. } => rot_matrix(Axis::X, angle),
            NativeGate::Ry { angle, .. } => rot_matrix(Axis::Y, angle),
            NativeGate::Rz { angle, .. } => rot_matrix(Axis::Z, angle),
            NativeGate::Cnot { .. } => cnot_matrix(),
        }
    }
}

pub fn rot_matrix(axis: Axis, angle: f64) -> CMatrix {
    let r = rotation2(axis, angle);
    CMatrix::from_fn(2, 2, |i, j| r[i][j])
}

pub fn cnot_matrix() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = ONE;
    m[(1, 1)] = ONE;
    m[(2, 3)] = ONE;
    m[(3, 2)] = ONE;
    m
}

/// The outer (`A`) and inner (`B`) 2x2 blocks of a matchgate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchgateBlocks {
    pub a: [[C64; 2]; 2],
    pub b: [[C64; 2]; 2],
}

const OUTER: [usize; 2] = [0, 3];
const INNER: [usize; 2] = [1, 2];

fn det2(m: &[[C64; 2]; 2]) -> C64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn mul2(x: &[[C64; 2]; 2], y: &[[C64; 2]; 2]) -> [[C64; 2]; 2] {
    let mut out = [[ZERO; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = x[r][0] * y[0][c] + x[r][1] * y[1][c];
        }
    }
    out
}

fn is_unitary2(m: &[[C64; 2]; 2], tol: f64) -> bool {
    for r in 0..2 {
        for c in 0..2 {
            let dot: C64 = (0..2).map(|k| m[k][r].conj() * m[k][c]).sum();
            let expected = if r == c { ONE } else { ZERO };
            if (dot - expected).norm() > tol {
                return false;
            }
        }
    }
    true
}

impl MatchgateBlocks {
    pub const TOL: f64 = 1e-10;

    pub fn new(a: [[C64; 2]; 2], b: [[C64; 2]; 2]) -> Result<Self> {
        let blocks = Self { a, b };
        if !is_unitary2(&a, Self::TOL) || !is_unitary2(&b, Self::TOL) {
            return Err(Error::InvalidInput("matchgate blocks must be unitary".into()));
        }
        if (det2(&a) - det2(&b)).norm() > Self::TOL {
            return Err(Error::InvalidInput("matchgate blocks must have equal determinants".into()));
        }
        Ok(blocks)
    }

    pub fn identity() -> Self {
        Self { a: ID2, b: ID2 }
    }

    /// Reads the blocks out of a 4x4 matrix, failing if it is not a matchgate.
    pub fn from_matrix(m: &CMatrix, tol: f64) -> Result<Self> {
        if !is_matchgate(m, tol) {
            return Err(Error::InvalidInput("matrix does not have matchgate structure".into()));
        }
        let pick = |idx: [usize; 2]| {
            let mut out = [[ZERO; 2]; 2];
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    out[r][c] = m[(i, j)];
                }
            }
            out
        };
        Ok(Self { a: pick(OUTER), b: pick(INNER) })
    }

    pub fn to_matrix(&self) -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        for (r, &i) in OUTER.iter().enumerate() {
            for (c, &j) in OUTER.iter().enumerate() {
                m[(i, j)] = self.a[r][c];
            }
        }
        for (r, &i) in INNER.iter().enumerate() {
            for (c, &j) in INNER.iter().enumerate() {
                m[(i, j)] = self.b[r][c];
            }
        }
        m
    }

    /// `G(A1, B1) G(A2, B2) = G(A1 A2, B1 B2)`.
    pub fn compose(&self, other: &MatchgateBlocks) -> MatchgateBlocks {
        MatchgateBlocks { a: mul2(&self.a, &other.a), b: mul2(&self.b, &other.b) }
    }

    pub fn det_a(&self) -> C64 {
        det2(&self.a)
    }

    pub fn det_b(&self) -> C64 {
        det2(&self.b)
    }
}

/// True iff the eight entries outside the outer/inner blocks vanish within
/// `tol`. Blocks need not share a determinant.
pub fn has_block_pattern(m: &CMatrix, tol: f64) -> bool {
    if m.shape() != (4, 4) {
        return false;
    }
    (0..4).all(|r| {
        (0..4).all(|c| {
            let same_block = (OUTER.contains(&r) && OUTER.contains(&c))
                || (INNER.contains(&r) && INNER.contains(&c));
            same_block || m[(r, c)].norm() <= tol
        })
    })
}

/// True iff the block pattern holds and the two block determinants agree,
/// both within `tol`.
///
/// Gates generated by `ZZ` have the pattern but opposite-phase determinants
/// (`exp(-i theta/2 ZZ)` has `det A = e^{-i theta}`, `det B = e^{i theta}`),
/// so they fail this check.
pub fn is_matchgate(m: &CMatrix, tol: f64) -> bool {
    if !has_block_pattern(m, tol) {
        return false;
    }
    let det = |idx: [usize; 2]| m[(idx[0], idx[0])] * m[(idx[1], idx[1])] - m[(idx[0], idx[1])] * m[(idx[1], idx[0])];
    (det(OUTER) - det(INNER)).norm() <= tol
}

/// Product of a native gate list on `n_qubits`, first gate applied first.
pub fn native_unitary(gates: &[NativeGate], n_qubits: usize) -> Result<CMatrix> {
    let dim = 1usize << n_qubits;
    let mut u = crate::linalg::identity(dim);
    for g in gates {
        let m = g.matrix();
        for col in 0..dim {
            let mut column: Vec<C64> = u.column(col).iter().copied().collect();
            crate::linalg::apply_in_place(&mut column, &m, &g.qubits(), n_qubits)?;
            u.set_column(col, &nalgebra::DVector::from_vec(column));
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_unitary, kron, max_abs_diff, phase_invariant_distance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_gate(family: Family, rng: &mut ChaCha8Rng) -> GGate {
        let angles = (0..family.arity()).map(|_| rng.random_range(-PI..PI)).collect();
        GGate::new(family, angles).unwrap()
    }

    fn random_su2(rng: &mut ChaCha8Rng) -> [[C64; 2]; 2] {
        let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (a, b) = (C64::new(v[0] / n, v[1] / n), C64::new(v[2] / n, v[3] / n));
        [[a, -b.conj()], [b, a.conj()]]
    }

    fn random_blocks(rng: &mut ChaCha8Rng) -> MatchgateBlocks {
        let phase = C64::from_polar(1.0, rng.random_range(-PI..PI));
        let scale = |m: [[C64; 2]; 2]| m.map(|row| row.map(|z| z * phase));
        MatchgateBlocks::new(scale(random_su2(rng)), scale(random_su2(rng))).unwrap()
    }

    #[test]
    fn identity_and_cnot_structure() {
        assert!(is_matchgate(&crate::linalg::identity(4), 1e-12));
        // det outer = 1, det inner = -1
        assert!(!is_matchgate(&cnot_matrix(), 1e-12));
        assert!(is_matchgate(&GGate::new(Family::F1, vec![0.7]).unwrap().matrix(), 1e-12));
    }

    #[test]
    fn arity_is_checked() {
        assert!(matches!(
            GGate::new(Family::F10, vec![0.1, 0.2]),
            Err(Error::ArityMismatch { expected: 4, got: 2, .. })
        ));
    }

    #[test]
    fn f1_at_zero_is_identity() {
        let m = GGate::new(Family::F1, vec![0.0]).unwrap().matrix();
        assert!(max_abs_diff(&m, &crate::linalg::identity(4)) < 1e-15);
    }

    #[test]
    fn f3_closed_form() {
        let phi = 0.83;
        let m = GGate::new(Family::F3, vec![phi]).unwrap().matrix();
        let expected = [-phi / 2.0, phi / 2.0, phi / 2.0, -phi / 2.0];
        for (k, e) in expected.iter().enumerate() {
            assert!((m[(k, k)] - C64::from_polar(1.0, *e)).norm() < 1e-15);
        }
    }

    #[test]
    fn closed_form_matches_generator_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for family in Family::ALL {
            for _ in 0..50 {
                let g = random_gate(family, &mut rng);
                let d = max_abs_diff(&g.matrix(), &g.generator_matrix());
                assert!(d < 1e-13, "{family}: {d}");
            }
        }
    }

    #[test]
    fn every_family_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for family in Family::ALL {
            for _ in 0..100 {
                assert!(is_unitary(&random_gate(family, &mut rng).matrix(), 1e-12), "{family}");
            }
        }
    }

    #[test]
    fn matchgate_form_families_pass_structure_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for family in Family::ALL.into_iter().filter(|f| f.is_matchgate_form()) {
            let quadratic = matches!(family, Family::F1 | Family::F2 | Family::F7 | Family::F10);
            for _ in 0..20 {
                let m = random_gate(family, &mut rng).matrix();
                assert!(has_block_pattern(&m, 1e-10), "{family}");
                if quadratic {
                    assert!(is_matchgate(&m, 1e-10), "{family}");
                }
            }
        }
    }

    #[test]
    fn zz_rotations_have_pattern_but_unequal_determinants() {
        let m = GGate::new(Family::F3, vec![0.8]).unwrap().matrix();
        assert!(has_block_pattern(&m, 1e-12));
        assert!(!is_matchgate(&m, 1e-10));
        assert!(is_matchgate(&GGate::new(Family::F3, vec![2.0 * PI]).unwrap().matrix(), 1e-10));
    }

    #[test]
    fn f1_decomposition_is_cnot_rx_cnot() {
        let g = GGate::new(Family::F1, vec![0.9]).unwrap();
        let d = g.decompose();
        assert_eq!(
            d,
            vec![
                NativeGate::Cnot { control: 0, target: 1 },
                NativeGate::Rx { qubit: 0, angle: 0.9 },
                NativeGate::Cnot { control: 0, target: 1 },
            ]
        );
        let u = native_unitary(&d, 2).unwrap();
        let xx = kron(&Axis::X.pauli(), &Axis::X.pauli());
        let expected = crate::linalg::identity(4).scale(0.45f64.cos()) - xx * C64::new(0.0, 0.45f64.sin());
        assert!(max_abs_diff(&u, &expected) < 1e-14);
    }

    #[test]
    fn f3_at_zero_decomposes_to_identity() {
        let g = GGate::new(Family::F3, vec![0.0]).unwrap();
        let u = native_unitary(&g.decompose(), 2).unwrap();
        assert!(max_abs_diff(&u, &crate::linalg::identity(4)) < 1e-15);
    }

    #[test]
    fn f10_matches_decomposed_circuit() {
        let g = GGate::new(Family::F10, vec![0.3, 0.7, -0.2, 0.5]).unwrap();
        let u = native_unitary(&g.decompose(), 2).unwrap();
        assert!(phase_invariant_distance(&u, &g.matrix()).unwrap() < 1e-12);
    }

    #[test]
    fn decompositions_use_two_cnots_and_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for family in Family::ALL {
            for _ in 0..100 {
                let g = random_gate(family, &mut rng);
                let d = g.decompose();
                assert_eq!(d.iter().filter(|n| n.is_cnot()).count(), 2);
                let u = native_unitary(&d, 2).unwrap();
                let dist = phase_invariant_distance(&u, &g.matrix()).unwrap();
                assert!(dist <= 1e-10, "{family}: {dist}");
            }
        }
    }

    #[test]
    fn z_field_absorbs_into_zz() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (t0, t2) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI));
            let f6 = GGate::new(Family::F6, vec![t0, t2]).unwrap().matrix();
            let f3 = GGate::new(Family::F3, vec![t2]).unwrap().matrix();
            let rz = kron(&rot_matrix(Axis::Z, t0), &rot_matrix(Axis::Z, t0));
            assert!(phase_invariant_distance(&f6, &(rz * f3)).unwrap() < 1e-12);
        }
    }

    #[test]
    fn strip_field_layers() {
        let f4 = GGate::new(Family::F4, vec![0.0, 0.4]).unwrap();
        let stripped = f4.strip_field_layers().unwrap();
        assert!(max_abs_diff(&stripped, &GGate::new(Family::F1, vec![0.4]).unwrap().matrix()) < 1e-15);
        assert!(is_matchgate(&stripped, 1e-12));

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for family in [Family::F4, Family::F5, Family::F10, Family::F11, Family::F12] {
            let g = random_gate(family, &mut rng);
            let stripped = g.strip_field_layers().unwrap();
            assert!(has_block_pattern(&stripped, 1e-10), "{family}");
            if matches!(family, Family::F4 | Family::F5 | Family::F10) {
                assert!(is_matchgate(&stripped, 1e-10), "{family}");
            }
        }
        let f6 = GGate::new(Family::F6, vec![0.2, 0.3]).unwrap();
        assert!(matches!(f6.strip_field_layers(), Err(Error::FamilyMismatch(_))));
    }

    #[test]
    fn compose_identity_and_f1_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = random_blocks(&mut rng);
        assert_eq!(MatchgateBlocks::identity().compose(&g), g);

        let (ta, tb) = (0.4, -1.3);
        let a = MatchgateBlocks::from_matrix(&GGate::new(Family::F1, vec![ta]).unwrap().matrix(), 1e-12).unwrap();
        let b = MatchgateBlocks::from_matrix(&GGate::new(Family::F1, vec![tb]).unwrap().matrix(), 1e-12).unwrap();
        let sum = GGate::new(Family::F1, vec![ta + tb]).unwrap().matrix();
        assert!(max_abs_diff(&a.compose(&b).to_matrix(), &sum) < 1e-14);
    }

    #[test]
    fn compose_matches_brute_force_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let (g1, g2) = (random_blocks(&mut rng), random_blocks(&mut rng));
            let g3 = g1.compose(&g2);
            let direct = g1.to_matrix() * g2.to_matrix();
            assert!(is_matchgate(&g3.to_matrix(), 1e-9));
            assert!(max_abs_diff(&g3.to_matrix(), &direct) < 1e-9);
            assert!((g3.det_a() - g1.det_a() * g2.det_a()).norm() < 1e-9);
            assert!((g3.det_a() - g3.det_b()).norm() < 1e-9);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-6;
        for family in Family::ALL {
            let g = random_gate(family, &mut rng);
            let (m, jac) = GGate::matrix_and_jacobian(family, g.angles());
            assert!(max_abs_diff(&mat4_to_matrix(&m), &g.matrix()) < 1e-13);
            for k in 0..family.arity() {
                let mut plus = g.angles().to_vec();
                let mut minus = g.angles().to_vec();
                plus[k] += h;
                minus[k] -= h;
                let fd = (GGate::new(family, plus).unwrap().matrix()
                    - GGate::new(family, minus).unwrap().matrix())
                    / C64::new(2.0 * h, 0.0);
                assert!(max_abs_diff(&fd, &mat4_to_matrix(&jac[k])) < 1e-8, "{family} slot {k}");
            }
        }
    }
}
