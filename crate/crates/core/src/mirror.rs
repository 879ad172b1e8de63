//! Mirroring identities for brickwork blocks of family gates, and
//! downfolding of naive Trotter circuits to constant depth.
//!
//! A brickwork block on `N` qubits is a reduced word for the longest
//! permutation, with letter `s` the gate on `(s, s + 1)`. Its mirror is
//! another reduced word for the same permutation, so the two are connected
//! by commutations (free: the gates act on disjoint qubits) and braid moves
//! `(a, b, a) -> (b, a, b)`, each solved numerically on three qubits.

use serde::{Deserialize, Serialize};

use crate::ansatz::{FitProblem, Slot, Structure};
use crate::circuit::{column_sites, Circuit, Placement};
use crate::error::{Error, Result};
use crate::hamiltonian::DEFAULT_SIZE_CAP;
use crate::linalg::{phase_invariant_distance, CMatrix};
use crate::matchgate::{is_matchgate, Family, GGate, MatchgateBlocks, NativeGate};
use crate::optimize::OptimizeOptions;

/// A family gate on qubits `(site, site + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedGate {
    pub site: usize,
    pub gate: GGate,
}

impl PlacedGate {
    pub fn new(site: usize, gate: GGate) -> Self {
        Self { site, gate }
    }
}

/// Product of `word` on `n_qubits`, first gate applied first.
pub fn word_unitary(n_qubits: usize, word: &[PlacedGate]) -> Result<CMatrix> {
    let mut c = Circuit::new(n_qubits);
    for g in word {
        c.push_gate(g.site, g.gate.clone())?;
    }
    c.unitary_capped(DEFAULT_SIZE_CAP)
}

fn word_structure(n_qubits: usize, family: Family, sites: &[usize]) -> Result<Structure> {
    Structure::new(n_qubits, sites.iter().map(|&site| Slot::Gate { site, family }).collect())
}

fn word_angles(word: &[PlacedGate]) -> Vec<f64> {
    word.iter().flat_map(|g| g.gate.angles().iter().copied()).collect()
}

fn single_family(word: &[PlacedGate]) -> Result<Family> {
    let family = word.first().map(|g| g.gate.family()).ok_or_else(|| Error::InvalidInput("empty gate list".into()))?;
    if let Some(g) = word.iter().find(|g| g.gate.family() != family) {
        return Err(Error::FamilyMismatch(format!("expected only {family} gates, found {}", g.gate.family())));
    }
    Ok(family)
}

fn rebuild(family: Family, sites: &[usize], params: &[f64]) -> Result<Vec<PlacedGate>> {
    let k = family.arity();
    sites
        .iter()
        .zip(params.chunks(k))
        .map(|(&site, a)| Ok(PlacedGate::new(site, GGate::new(family, a.to_vec())?)))
        .collect()
}

/// Optimizer settings for the three-qubit mirror problems.
pub fn vee_hat_options(seed: u64) -> OptimizeOptions {
    OptimizeOptions { tol: 1e-8, max_restarts: 16, seed, stop_cost: 1e-16, ..Default::default() }
}

/// Right-hand side of a solved three-gate mirror.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VeeHat {
    /// `[G4, G5, G6]`.
    pub gates: [GGate; 3],
    /// Phase-invariant distance between the two sides.
    pub residual: f64,
    pub restarts: usize,
}

/// Rewrites three same-family gates on sites `(a, b, a)`, `|a - b| = 1`, in
/// application order, into gates on `(b, a, b)` with the same product.
fn braid(word: &[PlacedGate], opts: &OptimizeOptions) -> Result<(Vec<PlacedGate>, f64, usize)> {
    let family = single_family(word)?;
    let (a, b) = (word[0].site, word[1].site);
    if word.len() != 3 || word[2].site != a || a.abs_diff(b) != 1 {
        return Err(Error::InvalidInput("braid move needs gates on sites (a, a +- 1, a)".into()));
    }
    let lo = a.min(b);
    let local: Vec<PlacedGate> = word.iter().map(|g| PlacedGate::new(g.site - lo, g.gate.clone())).collect();
    let lhs = word_unitary(3, &local)?;
    let rhs_sites = [b - lo, a - lo, b - lo];
    let structure = word_structure(3, family, &rhs_sites)?;
    let problem = FitProblem::new(&structure, &lhs)?;
    let m = problem.solve(Some(word_angles(word)), opts);
    let rhs = rebuild(family, &rhs_sites, &m.x)?;
    let residual = phase_invariant_distance(&lhs, &word_unitary(3, &rhs)?)?;
    if !m.converged || residual > opts.tol {
        return Err(Error::NonConvergence { best_cost: residual, restarts: m.restarts, best_angles: m.x });
    }
    let placed = rhs.into_iter().map(|g| PlacedGate::new(g.site + lo, g.gate)).collect();
    Ok((placed, residual, m.restarts))
}

/// Finds `G4, G5, G6` with
/// `(G1 x I)(I x G2)(G3 x I) = (I x G4)(G5 x I)(I x G6)` up to global phase.
/// Fails with `NonConvergence` (carrying the best residual) when no solution
/// within `opts.tol` is found.
pub fn solve_vee_hat(g1: &GGate, g2: &GGate, g3: &GGate, opts: &OptimizeOptions) -> Result<VeeHat> {
    let word = [PlacedGate::new(0, g3.clone()), PlacedGate::new(1, g2.clone()), PlacedGate::new(0, g1.clone())];
    let (rhs, residual, restarts) = braid(&word, opts)?;
    Ok(VeeHat { gates: [rhs[2].gate.clone(), rhs[1].gate.clone(), rhs[0].gate.clone()], residual, restarts })
}

struct Rewriter<'a> {
    opts: &'a OptimizeOptions,
    braids: usize,
}

impl Rewriter<'_> {
    /// Rewrites `word` in place so it starts with a gate on `site`.
    fn bring_front(&mut self, word: &mut [PlacedGate], site: usize) -> Result<()> {
        let Some(first) = word.first() else {
            return Err(Error::InvalidInput("words are not reduced expressions of one permutation".into()));
        };
        let t = first.site;
        if t == site {
            return Ok(());
        }
        if word.len() < 2 {
            return Err(Error::InvalidInput("words are not reduced expressions of one permutation".into()));
        }
        self.bring_front(&mut word[1..], site)?;
        if t.abs_diff(site) >= 2 {
            word.swap(0, 1);
        } else {
            if word.len() < 3 {
                return Err(Error::InvalidInput("words are not reduced expressions of one permutation".into()));
            }
            self.bring_front(&mut word[2..], t)?;
            let (new, _, _) = braid(&word[..3], self.opts)?;
            word[..3].clone_from_slice(&new);
            self.braids += 1;
        }
        Ok(())
    }

    fn transform(&mut self, word: &mut [PlacedGate], target: &[usize]) -> Result<()> {
        if word.len() != target.len() {
            return Err(Error::InvalidInput("words differ in length".into()));
        }
        for (i, &s) in target.iter().enumerate() {
            self.bring_front(&mut word[i..], s)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MirrorMethod {
    /// Sequence of three-qubit braid moves.
    Braid,
    /// Direct fit of the whole mirrored block.
    WholeBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorSolution {
    /// Mirrored gates in application order, column by column.
    pub gates: Vec<PlacedGate>,
    pub residual: f64,
    pub method: MirrorMethod,
    pub braid_moves: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MirrorOptions {
    pub seed: u64,
    /// Largest accepted phase-invariant distance.
    pub tol: f64,
    /// Restart budget of the whole-block fallback.
    pub fallback_restarts: usize,
}

impl Default for MirrorOptions {
    fn default() -> Self {
        Self { seed: 0, tol: 1e-8, fallback_restarts: 16 }
    }
}

/// Sites of an `n_qubits`-column brickwork block whose first column starts
/// at `parity`, column by column.
pub fn block_sites(n_qubits: usize, parity: usize) -> Vec<usize> {
    if n_qubits == 2 {
        return vec![0];
    }
    (0..n_qubits).flat_map(|c| column_sites(n_qubits, c + parity)).collect()
}

/// Replaces an `N`-column brickwork block by its mirror image: the block
/// with the opposite column parity and the same product up to global phase.
pub fn mirror_block(n_qubits: usize, block: &[PlacedGate], opts: &MirrorOptions) -> Result<MirrorSolution> {
    let family = single_family(block)?;
    let sites: Vec<usize> = block.iter().map(|g| g.site).collect();
    let parity = (0..2)
        .find(|&p| block_sites(n_qubits, p) == sites)
        .ok_or_else(|| Error::InvalidInput(format!("gates do not form a {n_qubits}-column brickwork block")))?;
    let target_sites = block_sites(n_qubits, 1 - parity);
    if n_qubits == 2 {
        return Ok(MirrorSolution { gates: block.to_vec(), residual: 0.0, method: MirrorMethod::Braid, braid_moves: 0 });
    }
    let target = word_unitary(n_qubits, block)?;
    let structure = word_structure(n_qubits, family, &target_sites)?;
    let problem = FitProblem::new(&structure, &target)?;
    let vee = vee_hat_options(opts.seed);

    let mut rewriter = Rewriter { opts: &vee, braids: 0 };
    let mut word = block.to_vec();
    let braided = rewriter.transform(&mut word, &target_sites);
    if braided.is_ok() {
        let mut params = word_angles(&word);
        let mut residual = problem.cost(&params);
        if residual > vee.stop_cost {
            let (p, c, _) = problem.polish(&params, 50, vee.stop_cost);
            if c < residual {
                params = p;
                residual = c;
            }
        }
        if residual <= opts.tol {
            let gates = rebuild(family, &target_sites, &params)?;
            let residual = phase_invariant_distance(&target, &word_unitary(n_qubits, &gates)?)?;
            return Ok(MirrorSolution { gates, residual, method: MirrorMethod::Braid, braid_moves: rewriter.braids });
        }
    }

    let whole = OptimizeOptions { tol: opts.tol, max_restarts: opts.fallback_restarts, ..vee };
    let initial = if braided.is_ok() { word_angles(&word) } else { word_angles(block) };
    let m = problem.solve(Some(initial), &whole);
    if !m.converged {
        return Err(Error::NonConvergence { best_cost: m.cost, restarts: m.restarts, best_angles: m.x });
    }
    let gates = rebuild(family, &target_sites, &m.x)?;
    let residual = phase_invariant_distance(&target, &word_unitary(n_qubits, &gates)?)?;
    Ok(MirrorSolution { gates, residual, method: MirrorMethod::WholeBlock, braid_moves: rewriter.braids })
}

/// Single gate equal to `second * first`. The product is formed blockwise
/// when both are matchgates; the angles are then refitted, starting from
/// their sum.
pub fn merge_gates(first: &GGate, second: &GGate) -> Result<GGate> {
    let family = first.family();
    if second.family() != family {
        return Err(Error::FamilyMismatch(format!("cannot merge {family} with {}", second.family())));
    }
    let (a, b) = (first.matrix(), second.matrix());
    let product = if is_matchgate(&a, MatchgateBlocks::TOL) && is_matchgate(&b, MatchgateBlocks::TOL) {
        MatchgateBlocks::from_matrix(&b, MatchgateBlocks::TOL)?
            .compose(&MatchgateBlocks::from_matrix(&a, MatchgateBlocks::TOL)?)
            .to_matrix()
    } else {
        b * a
    };
    let structure = word_structure(2, family, &[0])?;
    let problem = FitProblem::new(&structure, &product)?;
    let sum: Vec<f64> = first.angles().iter().zip(second.angles()).map(|(x, y)| x + y).collect();
    let opts = OptimizeOptions { tol: 1e-12, max_restarts: 8, stop_cost: 1e-16, ..Default::default() };
    let m = problem.solve(Some(sum), &opts);
    if !m.converged {
        return Err(Error::NonConvergence { best_cost: m.cost, restarts: m.restarts, best_angles: m.x });
    }
    GGate::new(family, m.x)
}

/// One mirror-plus-merge pass of a downfold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownfoldPass {
    pub columns_before: usize,
    pub columns_after: usize,
    pub mirror_residual: f64,
    pub method: MirrorMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Downfold {
    pub circuit: Circuit,
    pub passes: Vec<DownfoldPass>,
    /// Phase-invariant distance between input and output.
    pub distance: f64,
}

type Column = Vec<PlacedGate>;

/// Splits a naive circuit into full brickwork gate columns, folding
/// z rotation columns into the field slot of the following gates.
fn naive_columns(naive: &Circuit) -> Result<Vec<Column>> {
    let n = naive.n_qubits();
    let mut columns: Vec<Column> = Vec::new();
    let mut pending: Vec<Option<f64>> = vec![None; n];
    let mut any_field = false;
    let mut current: Column = Vec::new();
    let flush = |current: &mut Column, columns: &mut Vec<Column>| {
        if !current.is_empty() {
            columns.push(std::mem::take(current));
        }
    };
    for p in naive.placements() {
        match p {
            Placement::Native(NativeGate::Rz { qubit, angle }) => {
                flush(&mut current, &mut columns);
                let slot = &mut pending[*qubit];
                *slot = Some(slot.unwrap_or(0.0) + angle);
                any_field = true;
            }
            Placement::Native(_) => {
                return Err(Error::IneligibleForDownfold(
                    "only z-field rotations can be folded into the gates; compile x/y-field models by direct synthesis".into(),
                ))
            }
            Placement::Gate { site, gate } => {
                if current.last().is_some_and(|g| g.site % 2 != site % 2 || g.site >= *site) {
                    flush(&mut current, &mut columns);
                }
                if current.is_empty() && pending.iter().any(Option::is_some) {
                    let covered: Vec<usize> = column_sites(n, *site).iter().flat_map(|&s| [s, s + 1]).collect();
                    if covered.len() != n {
                        return Err(Error::IneligibleForDownfold(format!(
                            "a z rotation column on {n} qubits cannot be folded into a gate column with a free end qubit"
                        )));
                    }
                }
                current.push(PlacedGate::new(*site, gate.clone()));
            }
        }
        // attach pending rotations once the column that absorbs them is complete
        if let Some(col) = current.first().map(|g| g.site % 2) {
            if current.len() == column_sites(n, col).len() && pending.iter().any(Option::is_some) {
                for g in current.iter_mut() {
                    let (a, b) = (pending[g.site].unwrap_or(0.0), pending[g.site + 1].unwrap_or(0.0));
                    if (a - b).abs() > 1e-15 {
                        return Err(Error::IneligibleForDownfold(
                            "z rotations differ on the two qubits of a gate".into(),
                        ));
                    }
                    g.gate = with_field(&g.gate, a)?;
                }
                pending.iter_mut().for_each(|p| *p = None);
            }
        }
    }
    flush(&mut current, &mut columns);
    if pending.iter().any(Option::is_some) {
        return Err(Error::IneligibleForDownfold("trailing z rotations have no gate column to fold into".into()));
    }
    if any_field {
        // every gate must carry the field slot, including steps without rotations
        for g in columns.iter_mut().flatten() {
            if g.gate.family().field_axis().is_none() {
                g.gate = with_field(&g.gate, 0.0)?;
            }
        }
    }
    for (c, col) in columns.iter().enumerate() {
        let parity = col[0].site % 2;
        let sites: Vec<usize> = col.iter().map(|g| g.site).collect();
        if sites != column_sites(n, parity) || (c > 0 && n > 2 && columns[c - 1][0].site % 2 == parity) {
            return Err(Error::InvalidInput("circuit is not a sequence of alternating full brickwork columns".into()));
        }
    }
    if columns.first().is_some_and(|c| c[0].site != 0) {
        return Err(Error::InvalidInput("first gate column must start at qubit 0".into()));
    }
    Ok(columns)
}

/// Coupling gate lifted to its z-field family with `angle` in the leading
/// field slot.
fn with_field(gate: &GGate, angle: f64) -> Result<GGate> {
    let a = gate.angles();
    match gate.family() {
        Family::F3 => GGate::new(Family::F6, vec![angle, a[0]]),
        Family::F7 => GGate::new(Family::F10, vec![angle, a[0], a[1], 0.0]),
        Family::F6 | Family::F10 => {
            let mut v = a.to_vec();
            v[0] += angle;
            GGate::new(gate.family(), v)
        }
        f => Err(Error::IneligibleForDownfold(format!("family {f} gates cannot absorb a z field"))),
    }
}

/// Compresses a naive circuit to `N` gate columns by repeatedly mirroring
/// the last `N` columns and merging the now-adjacent same-pair gates.
/// Circuits with at most `N` columns are returned unchanged.
pub fn downfold(naive: &Circuit, opts: &MirrorOptions) -> Result<Downfold> {
    let n = naive.n_qubits();
    let input = naive.unitary_capped(DEFAULT_SIZE_CAP)?;
    let has_field = naive.placements().iter().any(|p| matches!(p, Placement::Native(_)));
    let mut columns = naive_columns(naive)?;
    let target_len = if n == 2 { 1 } else { n };
    if columns.len() <= target_len && !has_field {
        return Ok(Downfold { circuit: naive.clone(), passes: Vec::new(), distance: 0.0 });
    }
    let mut passes = Vec::new();
    while columns.len() > target_len {
        let before = columns.len();
        let (residual, method) = if n == 2 {
            (0.0, MirrorMethod::Braid)
        } else {
            let block: Vec<PlacedGate> = columns.drain(before - n..).flatten().collect();
            let mirrored = mirror_block(n, &block, opts)?;
            let parity = mirrored.gates[0].site % 2;
            let mut rest = mirrored.gates.into_iter().peekable();
            for c in 0..n {
                let len = column_sites(n, c + parity).len();
                columns.push(rest.by_ref().take(len).collect());
            }
            (mirrored.residual, mirrored.method)
        };
        // merge column `before - n - 1` (or the first of two for N = 2)
        let k = before - target_len - 1;
        let next = columns.remove(k + 1);
        for (g, h) in columns[k].iter_mut().zip(next) {
            g.gate = merge_gates(&g.gate, &h.gate)?;
        }
        passes.push(DownfoldPass { columns_before: before, columns_after: columns.len(), mirror_residual: residual, method });
    }
    let mut circuit = Circuit::new(n);
    circuit.metadata = naive.metadata.clone();
    circuit.metadata.insert("kind".into(), "downfolded".into());
    for g in columns.into_iter().flatten() {
        circuit.push_gate(g.site, g.gate)?;
    }
    let distance = phase_invariant_distance(&input, &circuit.unitary_capped(DEFAULT_SIZE_CAP)?)?;
    Ok(Downfold { circuit, passes, distance })
}
