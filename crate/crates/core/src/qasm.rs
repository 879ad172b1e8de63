//! OpenQASM 2.0 output for fully decomposed circuits.

use std::fmt::Write as _;

use crate::circuit::{Circuit, Placement};
use crate::error::{Error, Result};
use crate::matchgate::NativeGate;

/// Angles use the shortest decimal form that parses back to the same
/// double (at most 17 significant digits).
pub fn emit_qasm(c: &Circuit) -> Result<String> {
    let mut s = String::from("OPENQASM 2.0;\ninclude \"qelib1.inc\";\n");
    s.push_str("// qubit k is q[k]; q[0] is the most significant bit of basis-state indices\n");
    let _ = writeln!(s, "qreg q[{}];", c.n_qubits());
    for (k, p) in c.placements().iter().enumerate() {
        let Placement::Native(g) = p else {
            return Err(Error::UndecomposedGate(k));
        };
        let _ = match *g {
            NativeGate::Rx { qubit, angle } => writeln!(s, "rx({angle:?}) q[{qubit}];"),
            NativeGate::Ry { qubit, angle } => writeln!(s, "ry({angle:?}) q[{qubit}];"),
            NativeGate::Rz { qubit, angle } => writeln!(s, "rz({angle:?}) q[{qubit}];"),
            NativeGate::Cnot { control, target } => writeln!(s, "cx q[{control}],q[{target}];"),
        };
    }
    Ok(s)
}

/// Number of `cx` statements in QASM text.
pub fn count_cx(qasm: &str) -> usize {
    qasm.lines().filter(|l| l.trim_start().starts_with("cx ")).count()
}
