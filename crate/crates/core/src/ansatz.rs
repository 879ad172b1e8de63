//! Parameterized circuit structures and the phase-invariant fitting cost.
//!
//! Cost is `1 - |Tr(V^dagger U(theta))| / 2^n`. Gradients are exact: a
//! forward sweep stores the partial products, a backward sweep carries
//! `V^dagger` times the trailing gates, and each gate's 4x4 environment is
//! contracted against its angle Jacobian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Axis, CMatrix, C64, ZERO};
use crate::matchgate::{rotation2, Family, GGate, Mat4};
use crate::optimize::{bfgs, random_angles, start_rng, Minimum, OptimizeOptions};

/// One parameterized element of a structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    /// Family gate on `(site, site + 1)`.
    Gate { site: usize, family: Family },
    /// Single-qubit rotation `R_axis(theta)`.
    Rotation { qubit: usize, axis: Axis },
}

impl Slot {
    pub fn arity(&self) -> usize {
        match self {
            Slot::Gate { family, .. } => family.arity(),
            Slot::Rotation { .. } => 1,
        }
    }

    /// Pair the slot's 4x4 matrix acts on.
    fn site(&self, n_qubits: usize) -> usize {
        match *self {
            Slot::Gate { site, .. } => site,
            Slot::Rotation { qubit, .. } => qubit.min(n_qubits - 2),
        }
    }

    fn matrix_and_jacobian(&self, n_qubits: usize, angles: &[f64]) -> (Mat4, Vec<Mat4>) {
        match *self {
            Slot::Gate { family, .. } => GGate::matrix_and_jacobian(family, angles),
            Slot::Rotation { qubit, axis } => {
                let r = rotation2(axis, angles[0]);
                // dR/dtheta = -i/2 sigma R = R(theta + pi) / 2
                let dr = rotation2(axis, angles[0] + std::f64::consts::PI).map(|row| row.map(|z| z * 0.5));
                let id = [[C64::new(1.0, 0.0), ZERO], [ZERO, C64::new(1.0, 0.0)]];
                let lower = qubit == n_qubits - 1;
                let lift = |m: &[[C64; 2]; 2]| {
                    let mut out = [[ZERO; 4]; 4];
                    for (r, row) in out.iter_mut().enumerate() {
                        for (c, slot) in row.iter_mut().enumerate() {
                            *slot = if lower {
                                id[r >> 1][c >> 1] * m[r & 1][c & 1]
                            } else {
                                m[r >> 1][c >> 1] * id[r & 1][c & 1]
                            };
                        }
                    }
                    out
                };
                (lift(&r), vec![lift(&dr)])
            }
        }
    }
}

/// An ordered list of slots on an `n`-qubit register; the first slot is
/// applied first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Structure {
    pub n_qubits: usize,
    pub slots: Vec<Slot>,
}

impl Structure {
    pub fn new(n_qubits: usize, slots: Vec<Slot>) -> Result<Self> {
        if n_qubits < 2 {
            return Err(Error::InvalidInput("structures need at least two qubits".into()));
        }
        for slot in &slots {
            let bad = match *slot {
                Slot::Gate { site, .. } => site + 1 >= n_qubits,
                Slot::Rotation { qubit, .. } => qubit >= n_qubits,
            };
            if bad {
                return Err(Error::InvalidInput(format!("{slot:?} out of range for {n_qubits} qubits")));
            }
        }
        Ok(Self { n_qubits, slots })
    }

    pub fn param_count(&self) -> usize {
        self.slots.iter().map(Slot::arity).sum()
    }

    fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::InvalidInput(format!(
                "structure takes {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        Ok(())
    }

    /// Bit masks of the pair `(site, site+1)`: qubit 0 is the MSB.
    fn offsets(&self, site: usize) -> [usize; 4] {
        let hi = 1usize << (self.n_qubits - 1 - site);
        let lo = 1usize << (self.n_qubits - 2 - site);
        [0, lo, hi, hi | lo]
    }

    fn bases(&self, site: usize) -> impl Iterator<Item = usize> {
        let o = self.offsets(site);
        let mask = o[3];
        (0..self.dim()).filter(move |b| b & mask == 0)
    }

    /// Row-major `M <- G M` for `G` on `(site, site+1)`.
    fn left_apply(&self, m: &mut [C64], g: &Mat4, site: usize) {
        let d = self.dim();
        let o = self.offsets(site);
        for base in self.bases(site) {
            for col in 0..d {
                let v = [
                    m[(base + o[0]) * d + col],
                    m[(base + o[1]) * d + col],
                    m[(base + o[2]) * d + col],
                    m[(base + o[3]) * d + col],
                ];
                for (a, off) in o.iter().enumerate() {
                    m[(base + off) * d + col] = g[a][0] * v[0] + g[a][1] * v[1] + g[a][2] * v[2] + g[a][3] * v[3];
                }
            }
        }
    }

    /// Column-major `B <- B G` for `G` on `(site, site+1)`.
    fn right_apply(&self, b: &mut [C64], g: &Mat4, site: usize) {
        let d = self.dim();
        let o = self.offsets(site);
        for base in self.bases(site) {
            for row in 0..d {
                let v = [
                    b[(base + o[0]) * d + row],
                    b[(base + o[1]) * d + row],
                    b[(base + o[2]) * d + row],
                    b[(base + o[3]) * d + row],
                ];
                for (a, off) in o.iter().enumerate() {
                    b[(base + off) * d + row] = v[0] * g[0][a] + v[1] * g[1][a] + v[2] * g[2][a] + v[3] * g[3][a];
                }
            }
        }
    }

    fn slot_matrices(&self, params: &[f64]) -> Vec<(Mat4, Vec<Mat4>)> {
        let mut k = 0;
        self.slots
            .iter()
            .map(|slot| {
                let a = slot.arity();
                let out = slot.matrix_and_jacobian(self.n_qubits, &params[k..k + a]);
                k += a;
                out
            })
            .collect()
    }

    pub fn unitary(&self, params: &[f64]) -> Result<CMatrix> {
        self.check_params(params)?;
        let d = self.dim();
        let mut m = identity_row_major(d);
        for (slot, (g, _)) in self.slots.iter().zip(self.slot_matrices(params)) {
            self.left_apply(&mut m, &g, slot.site(self.n_qubits));
        }
        Ok(CMatrix::from_row_slice(d, d, &m))
    }

    /// Splits a flat parameter vector into per-slot angle vectors.
    pub fn split_params<'a>(&self, params: &'a [f64]) -> Vec<&'a [f64]> {
        let mut k = 0;
        self.slots
            .iter()
            .map(|s| {
                let a = s.arity();
                k += a;
                &params[k - a..k]
            })
            .collect()
    }
}

fn identity_row_major(d: usize) -> Vec<C64> {
    let mut m = vec![ZERO; d * d];
    for i in 0..d {
        m[i * d + i] = C64::new(1.0, 0.0);
    }
    m
}

/// A fitting problem: find parameters so the structure matches `target` up
/// to global phase.
pub struct FitProblem<'a> {
    structure: &'a Structure,
    target: CMatrix,
    /// `V^dagger`, column-major.
    target_adj: Vec<C64>,
}

/// Starts whose quasi-Newton cost lands below this are handed to the
/// least-squares polish.
const POLISH_BELOW: f64 = 1e-4;

/// Iteration budget for polishing a supplied initial guess.
const WARM_POLISH_ITERS: usize = 60;

impl<'a> FitProblem<'a> {
    pub fn new(structure: &'a Structure, target: &CMatrix) -> Result<Self> {
        let d = structure.dim();
        if target.shape() != (d, d) {
            return Err(Error::DimMismatch(format!(
                "target is {:?}, structure acts on {d}x{d}",
                target.shape()
            )));
        }
        let adj = target.adjoint();
        Ok(Self { structure, target: target.clone(), target_adj: adj.as_slice().to_vec() })
    }

    pub fn cost(&self, params: &[f64]) -> f64 {
        self.cost_and_gradient(params).0
    }

    pub fn cost_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let s = self.structure;
        let d = s.dim();
        let mats = s.slot_matrices(params);
        let sites: Vec<usize> = s.slots.iter().map(|sl| sl.site(s.n_qubits)).collect();

        // forward[k] = G_{k-1} ... G_0 (row-major)
        let mut forward = Vec::with_capacity(mats.len() + 1);
        forward.push(identity_row_major(d));
        for (k, (g, _)) in mats.iter().enumerate() {
            let mut next = forward[k].clone();
            s.left_apply(&mut next, g, sites[k]);
            forward.push(next);
        }
        let u = forward.last().unwrap();
        // Tr(V^dagger U): adj is column-major, u row-major
        let mut t = ZERO;
        for i in 0..d {
            for j in 0..d {
                t += self.target_adj[j * d + i] * u[j * d + i];
            }
        }
        let abs_t = t.norm();
        let cost = (1.0 - abs_t / d as f64).max(0.0);

        let mut grad = vec![0.0; s.param_count()];
        if abs_t == 0.0 {
            return (cost, grad);
        }
        let mut back = self.target_adj.clone();
        let mut offset = s.param_count();
        for k in (0..mats.len()).rev() {
            let (_, jac) = &mats[k];
            offset -= jac.len();
            let env = self.environment(&forward[k], &back, sites[k]);
            for (p, dg) in jac.iter().enumerate() {
                let mut dt = ZERO;
                for a in 0..4 {
                    for b in 0..4 {
                        dt += dg[a][b] * env[a][b];
                    }
                }
                grad[offset + p] = -(t.conj() * dt).re / (abs_t * d as f64);
            }
            s.right_apply(&mut back, &mats[k].0, sites[k]);
        }
        (cost, grad)
    }

    /// `env[a][b] = sum_r sum_x F[(b,r), x] B[x, (a,r)]`, so that
    /// `Tr(B G F) = sum_ab g[a][b] env[a][b]`.
    fn environment(&self, f: &[C64], b: &[C64], site: usize) -> Mat4 {
        let s = self.structure;
        let d = s.dim();
        let o = s.offsets(site);
        let mut env = [[ZERO; 4]; 4];
        for base in s.bases(site) {
            for a in 0..4 {
                let bcol = &b[(base + o[a]) * d..(base + o[a] + 1) * d];
                for bi in 0..4 {
                    let frow = &f[(base + o[bi]) * d..(base + o[bi] + 1) * d];
                    let mut acc = ZERO;
                    for x in 0..d {
                        acc += frow[x] * bcol[x];
                    }
                    env[a][bi] += acc;
                }
            }
        }
        env
    }

    /// Residual `U(theta) - e^{i phi} V` as real parts then imaginary parts.
    /// The last entry of `x` is `phi`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let d = self.structure.dim();
        let (params, phi) = x.split_at(x.len() - 1);
        let phase = C64::from_polar(1.0, phi[0]);
        let u = self.structure.unitary(params).expect("parameter count checked by caller");
        let mut r = vec![0.0; 2 * d * d];
        for i in 0..d {
            for j in 0..d {
                let e = u[(i, j)] - self.target[(i, j)] * phase;
                r[i * d + j] = e.re;
                r[i * d + j + d * d] = e.im;
            }
        }
        r
    }

    /// Residual `U(theta) - e^{i phi} V` split into real and imaginary
    /// parts, with its Jacobian. The last entry of `x` is `phi`.
    pub fn residual_and_jacobian(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let s = self.structure;
        let d = s.dim();
        let n = x.len();
        let (params, phi) = x.split_at(n - 1);
        let phase = C64::from_polar(1.0, phi[0]);
        let mats = s.slot_matrices(params);
        let sites: Vec<usize> = s.slots.iter().map(|sl| sl.site(s.n_qubits)).collect();
        let mut forward = Vec::with_capacity(mats.len() + 1);
        forward.push(identity_row_major(d));
        for (k, (g, _)) in mats.iter().enumerate() {
            let mut next = forward[k].clone();
            s.left_apply(&mut next, g, sites[k]);
            forward.push(next);
        }
        let u = forward.last().unwrap();
        let m = 2 * d * d;
        let mut r = vec![0.0; m];
        let mut jac = vec![0.0; m * n];
        for i in 0..d {
            for j in 0..d {
                let v = self.target[(i, j)] * phase;
                let e = u[i * d + j] - v;
                let dphi = -(C64::new(0.0, 1.0) * v);
                let row = i * d + j;
                r[row] = e.re;
                r[row + d * d] = e.im;
                jac[row * n + n - 1] = dphi.re;
                jac[(row + d * d) * n + n - 1] = dphi.im;
            }
        }
        // back = G_{K-1} ... G_{k+1}, column-major
        let mut back = identity_row_major(d);
        let mut offset = params.len();
        for k in (0..mats.len()).rev() {
            let (g, dgs) = &mats[k];
            offset -= dgs.len();
            let b = CMatrix::from_column_slice(d, d, &back);
            for (p, dg) in dgs.iter().enumerate() {
                let mut f = forward[k].clone();
                s.left_apply(&mut f, dg, sites[k]);
                let du = &b * CMatrix::from_row_slice(d, d, &f);
                let col = offset + p;
                for i in 0..d {
                    for j in 0..d {
                        let z = du[(i, j)];
                        let row = i * d + j;
                        jac[row * n + col] = z.re;
                        jac[(row + d * d) * n + col] = z.im;
                    }
                }
            }
            s.right_apply(&mut back, g, sites[k]);
        }
        (r, jac)
    }

    /// Least-squares refinement from `params`, stopping once the cost is
    /// at or below `stop`. Returns the refined point and its cost.
    pub fn polish(&self, params: &[f64], max_iter: usize, stop: f64) -> (Vec<f64>, f64, usize) {
        let d = self.structure.dim();
        let u = self.structure.unitary(params).expect("parameter count checked by caller");
        let mut t = ZERO;
        for i in 0..d {
            for j in 0..d {
                t += self.target[(i, j)].conj() * u[(i, j)];
            }
        }
        let mut x = params.to_vec();
        x.push(t.arg());
        let mut res = |x: &[f64]| self.residual(x);
        let mut jac = |x: &[f64]| self.residual_and_jacobian(x).1;
        let (mut x, _, evals) = crate::optimize::levenberg_marquardt(&mut res, &mut jac, x, max_iter, 2.0 * d as f64 * stop);
        x.pop();
        let cost = self.cost(&x);
        (x, cost, evals)
    }

    /// Multi-start quasi-Newton search; promising starts are refined by a
    /// least-squares polish. Deterministic for a fixed `opts.seed`.
    pub fn solve(&self, initial: Option<Vec<f64>>, opts: &OptimizeOptions) -> Minimum {
        let dim = self.structure.param_count();
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut evaluations = 0;
        let supplied = initial.is_some();
        let mut initial = initial;
        let mut obj = |x: &[f64]| self.cost_and_gradient(x);
        for start in 0..=opts.max_restarts {
            let x0 = match (start, initial.take()) {
                (0, Some(x)) => x,
                _ => random_angles(dim, &mut start_rng(opts.seed, start)),
            };
            // supplied guesses are usually close: try the polish first
            let x0 = if start == 0 && supplied {
                let (xp, fp, evals) = self.polish(&x0, WARM_POLISH_ITERS, opts.stop_cost);
                evaluations += evals;
                if fp <= opts.tol {
                    return Minimum { x: xp, cost: fp, restarts: 0, evaluations, converged: true };
                }
                if fp < self.cost(&x0) {
                    xp
                } else {
                    x0
                }
            } else {
                x0
            };
            let (mut x, mut f, evals) = bfgs(&mut obj, x0, opts);
            evaluations += evals;
            if f < POLISH_BELOW && f > opts.stop_cost {
                let (xp, fp, evals) = self.polish(&x, 200, opts.stop_cost);
                evaluations += evals;
                if fp < f {
                    x = xp;
                    f = fp;
                }
            }
            if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                best = Some((x, f));
            }
            if f <= opts.tol {
                let (x, cost) = best.unwrap();
                return Minimum { x, cost, restarts: start, evaluations, converged: true };
            }
        }
        let (x, cost) = best.unwrap_or_default();
        Minimum { x, cost, restarts: opts.max_restarts, evaluations, converged: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{embed, max_abs_diff, phase_invariant_distance};
    use crate::matchgate::mat4_to_matrix;

    fn brickwork(n: usize, family: Family) -> Structure {
        let mut slots = Vec::new();
        for c in 0..n {
            for site in (c % 2..n - 1).step_by(2) {
                slots.push(Slot::Gate { site, family });
            }
        }
        Structure::new(n, slots).unwrap()
    }

    #[test]
    fn unitary_matches_embedded_product() {
        let s = Structure::new(
            3,
            vec![
                Slot::Gate { site: 0, family: Family::F10 },
                Slot::Rotation { qubit: 2, axis: Axis::Y },
                Slot::Gate { site: 1, family: Family::F8 },
                Slot::Rotation { qubit: 0, axis: Axis::X },
            ],
        )
        .unwrap();
        let p = random_angles(s.param_count(), &mut start_rng(1, 0));
        let u = s.unitary(&p).unwrap();
        let g0 = embed(&GGate::new(Family::F10, p[0..4].to_vec()).unwrap().matrix(), &[0, 1], 3).unwrap();
        let r2 = embed(&crate::matchgate::rot_matrix(Axis::Y, p[4]), &[2], 3).unwrap();
        let g1 = embed(&GGate::new(Family::F8, p[5..7].to_vec()).unwrap().matrix(), &[1, 2], 3).unwrap();
        let r0 = embed(&crate::matchgate::rot_matrix(Axis::X, p[7]), &[0], 3).unwrap();
        let expected = r0 * g1 * r2 * g0;
        assert!(max_abs_diff(&u, &expected) < 1e-13);
    }

    #[test]
    fn rotation_slot_jacobian() {
        let slot = Slot::Rotation { qubit: 0, axis: Axis::Z };
        let (m, jac) = slot.matrix_and_jacobian(2, &[0.3]);
        let h = 1e-6;
        let (mp, _) = slot.matrix_and_jacobian(2, &[0.3 + h]);
        let (mm, _) = slot.matrix_and_jacobian(2, &[0.3 - h]);
        let fd = (mat4_to_matrix(&mp) - mat4_to_matrix(&mm)) / C64::new(2.0 * h, 0.0);
        assert!(max_abs_diff(&fd, &mat4_to_matrix(&jac[0])) < 1e-9);
        assert!(max_abs_diff(&mat4_to_matrix(&m), &crate::linalg::identity(4)) > 0.1);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        for (n, family) in [(3, Family::F10), (4, Family::F7), (3, Family::F12), (4, Family::F5)] {
            let mut slots = brickwork(n, family).slots;
            slots.push(Slot::Rotation { qubit: n - 1, axis: Axis::Z });
            let s = Structure::new(n, slots).unwrap();
            let target = s.unitary(&random_angles(s.param_count(), &mut start_rng(5, n))).unwrap();
            let prob = FitProblem::new(&s, &target).unwrap();
            let p = random_angles(s.param_count(), &mut start_rng(6, n));
            let (c, g) = prob.cost_and_gradient(&p);
            let direct = phase_invariant_distance(&s.unitary(&p).unwrap(), &target).unwrap();
            assert!((c - direct).abs() < 1e-13);
            let h = 1e-7;
            for k in 0..p.len() {
                let mut a = p.clone();
                let mut b = p.clone();
                a[k] += h;
                b[k] -= h;
                let fd = (prob.cost(&a) - prob.cost(&b)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-7, "{family} param {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn residual_jacobian_matches_central_differences() {
        let mut slots = brickwork(3, Family::F11).slots;
        slots.insert(0, Slot::Rotation { qubit: 1, axis: Axis::Y });
        let s = Structure::new(3, slots).unwrap();
        let target = s.unitary(&random_angles(s.param_count(), &mut start_rng(2, 0))).unwrap();
        let prob = FitProblem::new(&s, &target).unwrap();
        let mut x = random_angles(s.param_count() + 1, &mut start_rng(3, 0));
        x[0] = 0.4;
        let (r, jac) = prob.residual_and_jacobian(&x);
        let plain = prob.residual(&x);
        assert!(r.iter().zip(&plain).all(|(a, b)| (a - b).abs() < 1e-13));
        let n = x.len();
        let h = 1e-6;
        for k in 0..n {
            let mut a = x.clone();
            let mut b = x.clone();
            a[k] += h;
            b[k] -= h;
            let (ra, _) = prob.residual_and_jacobian(&a);
            let (rb, _) = prob.residual_and_jacobian(&b);
            for row in 0..r.len() {
                let fd = (ra[row] - rb[row]) / (2.0 * h);
                assert!((fd - jac[row * n + k]).abs() < 1e-8, "param {k} row {row}");
            }
        }
    }

    #[test]
    fn refits_a_reachable_target() {
        let s = brickwork(4, Family::F8);
        let target = s.unitary(&random_angles(s.param_count(), &mut start_rng(9, 0))).unwrap();
        let prob = FitProblem::new(&s, &target).unwrap();
        let min = prob.solve(None, &OptimizeOptions { seed: 3, ..Default::default() });
        assert!(min.converged, "cost {}", min.cost);
        assert!(min.cost < 1e-12);
    }
}
