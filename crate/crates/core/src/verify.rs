//! Property batteries behind the `verify` command.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::naive_circuit;
use crate::error::{Error, Result};
use crate::hamiltonian::{ModelSpec, TimeGrid};
use crate::linalg::{max_abs_diff, phase_invariant_distance, CMatrix, C64};
use crate::matchgate::{is_matchgate, native_unitary, Family, GGate, MatchgateBlocks};
use crate::mirror::{block_sites, downfold, mirror_block, solve_vee_hat, vee_hat_options, word_unitary, MirrorOptions, PlacedGate};
use crate::optimize::{random_angles, start_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    Lemma1,
    Conjecture,
    Mirror,
    Downfold,
    AppendixA,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Lemma1, Suite::Conjecture, Suite::Mirror, Suite::Downfold, Suite::AppendixA];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::Conjecture => "conjecture",
            Suite::Mirror => "mirror",
            Suite::Downfold => "downfold",
            Suite::AppendixA => "appendixA",
        }
    }

    /// Acceptance threshold on each trial's residual.
    pub fn tolerance(self) -> f64 {
        match self {
            Suite::Lemma1 => 1e-9,
            Suite::Conjecture | Suite::Mirror => 1e-8,
            Suite::Downfold => 1e-7,
            Suite::AppendixA => 1e-10,
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

/// A failed trial with what is needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub label: String,
    pub trial: usize,
    pub seed: u64,
    pub residual: f64,
    /// Input angles, gate by gate.
    pub angles: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub label: String,
    pub trials: usize,
    pub passed: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub tolerance: f64,
    /// Per family or per size, in run order.
    pub tallies: Vec<Tally>,
    pub failures: Vec<Failure>,
}

impl SuiteReport {
    fn new(suite: Suite) -> Self {
        Self { suite, tolerance: suite.tolerance(), tallies: Vec::new(), failures: Vec::new() }
    }

    fn record(&mut self, label: &str, trial: usize, seed: u64, residual: f64, angles: impl FnOnce() -> Vec<Vec<f64>>) {
        let pass = residual <= self.tolerance;
        let tally = match self.tallies.iter_mut().position(|t| t.label == label) {
            Some(i) => &mut self.tallies[i],
            None => {
                self.tallies.push(Tally { label: label.to_string(), trials: 0, passed: 0, max_residual: 0.0 });
                self.tallies.last_mut().unwrap()
            }
        };
        tally.trials += 1;
        tally.passed += usize::from(pass);
        tally.max_residual = tally.max_residual.max(residual);
        if !pass {
            self.failures.push(Failure { label: label.to_string(), trial, seed, residual, angles: angles() });
        }
    }

    pub fn trials(&self) -> usize {
        self.tallies.iter().map(|t| t.trials).sum()
    }

    pub fn passed(&self) -> usize {
        self.tallies.iter().map(|t| t.passed).sum()
    }

    pub fn max_residual(&self) -> f64 {
        self.tallies.iter().map(|t| t.max_residual).fold(0.0, f64::max)
    }

    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {}/{} passed, max residual {:.3e} (tolerance {:.0e})",
            self.suite,
            self.passed(),
            self.trials(),
            self.max_residual(),
            self.tolerance
        )?;
        for t in &self.tallies {
            writeln!(f, "  {:<8} {:>5}/{:<5} max residual {:.3e}", t.label, t.passed, t.trials, t.max_residual)?;
        }
        for x in &self.failures {
            writeln!(f, "  FAIL {} trial {} seed {} residual {:.3e}", x.label, x.trial, x.seed, x.residual)?;
        }
        Ok(())
    }
}

/// Seed of trial `trial` in a run seeded with `seed`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(trial as u64)
}

fn random_gate(family: Family, seed: u64, k: usize) -> Result<GGate> {
    GGate::new(family, random_angles(family.arity(), &mut start_rng(seed, k)))
}

/// Random `e^{i phi} SU(2)` matrix.
fn random_u2(rng: &mut impl Rng, phi: f64) -> [[C64; 2]; 2] {
    let (a, b, c) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
    let theta = (a.sqrt()).asin();
    let (p, q) = (std::f64::consts::TAU * b, std::f64::consts::TAU * c);
    let u = C64::from_polar(theta.cos(), p);
    let v = C64::from_polar(theta.sin(), q);
    let g = C64::from_polar(1.0, phi);
    [[g * u, g * v], [-g * v.conj(), g * u.conj()]]
}

fn random_matchgate(seed: u64, k: usize) -> Result<MatchgateBlocks> {
    let mut rng = start_rng(seed, k);
    let phi = std::f64::consts::PI * (2.0 * rng.random::<f64>() - 1.0);
    MatchgateBlocks::new(random_u2(&mut rng, phi), random_u2(&mut rng, phi))
}

/// Plain triple-loop product.
fn brute_product(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[(i, j)] += a[(i, k)] * b[(k, j)];
            }
        }
    }
    out
}

/// Products of random matchgate pairs, composed blockwise, against the
/// plain 4x4 product.
pub fn lemma1(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::Lemma1);
    for trial in 0..trials {
        let s = trial_seed(seed, trial);
        let (g, h) = (random_matchgate(s, 0)?, random_matchgate(s, 1)?);
        let composed = g.compose(&h).to_matrix();
        let brute = brute_product(&g.to_matrix(), &h.to_matrix());
        let mut residual = max_abs_diff(&composed, &brute);
        if !is_matchgate(&brute, 1e-9) {
            residual = f64::INFINITY;
        }
        report.record("pairs", trial, s, residual, Vec::new);
    }
    Ok(report)
}

/// Vee-hat solves on random same-family triples, every family.
pub fn conjecture(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::Conjecture);
    for family in Family::ALL {
        for trial in 0..trials {
            let s = trial_seed(seed, trial);
            let g: Vec<GGate> = (0..3).map(|k| random_gate(family, s, 100 * family.number() + k)).collect::<Result<_>>()?;
            let residual = match solve_vee_hat(&g[0], &g[1], &g[2], &vee_hat_options(s)) {
                Ok(v) => v.residual,
                Err(Error::NonConvergence { best_cost, .. }) => best_cost,
                Err(e) => return Err(e),
            };
            report.record(&family.to_string(), trial, s, residual, || g.iter().map(|x| x.angles().to_vec()).collect());
        }
    }
    Ok(report)
}

/// Random single-family blocks on 4 and 5 qubits, families taken in turn.
pub fn mirror(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::Mirror);
    for n in [4, 5] {
        for trial in 0..trials {
            let s = trial_seed(seed, trial);
            let family = Family::ALL[trial % Family::ALL.len()];
            let block: Vec<PlacedGate> = block_sites(n, 0)
                .into_iter()
                .enumerate()
                .map(|(k, site)| Ok(PlacedGate::new(site, random_gate(family, s, k)?)))
                .collect::<Result<_>>()?;
            let residual = match mirror_block(n, &block, &MirrorOptions { seed: s, ..Default::default() }) {
                Ok(m) => phase_invariant_distance(&word_unitary(n, &block)?, &word_unitary(n, &m.gates)?)?,
                Err(Error::NonConvergence { best_cost, .. }) => best_cost,
                Err(e) => return Err(e),
            };
            report.record(&format!("N={n} {family}"), trial, s, residual, || {
                block.iter().map(|g| g.gate.angles().to_vec()).collect()
            });
        }
    }
    Ok(report)
}

const NO_FIELD: [Family; 6] = [Family::F1, Family::F2, Family::F3, Family::F7, Family::F8, Family::F9];

/// Six-qubit no-field naive circuits for 3 to 10 steps. A trial fails if
/// the final distance exceeds the tolerance, a pass does not remove exactly
/// one column, or the result is not six columns deep.
pub fn downfold_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::Downfold);
    let n = 6;
    for trial in 0..trials {
        let s = trial_seed(seed, trial);
        let mut rng = start_rng(s, 0);
        let family = NO_FIELD[trial % NO_FIELD.len()];
        let steps = 3 + trial % 8;
        let mut couplings = [0.0; 3];
        for (axis, c) in couplings.iter_mut().enumerate() {
            let used = match family {
                Family::F1 => axis == 0,
                Family::F2 => axis == 1,
                Family::F3 => axis == 2,
                Family::F7 => axis != 2,
                Family::F8 => axis != 1,
                _ => axis != 0,
            };
            if used {
                *c = rng.random_range(-1.0..1.0);
            }
        }
        let spec = ModelSpec::new(n, couplings, None)?;
        let naive = naive_circuit(&spec, &TimeGrid::new(rng.random_range(0.05..0.5))?, steps)?;
        let residual = match downfold(&naive, &MirrorOptions { seed: s, ..Default::default() }) {
            Ok(d) => {
                let one_per_pass = d.passes.iter().all(|p| p.columns_before == p.columns_after + 1);
                let passes_ok = d.passes.len() == 2 * steps - n;
                if one_per_pass && passes_ok && d.circuit.gate_count() == n * (n - 1) / 2 {
                    d.distance
                } else {
                    f64::INFINITY
                }
            }
            Err(Error::NonConvergence { best_cost, .. }) => best_cost,
            Err(e) => return Err(e),
        };
        report.record(&format!("n={steps}"), trial, s, residual, || vec![couplings.to_vec()]);
    }
    report.tallies.sort_by_key(|t| t.label[2..].parse::<usize>().unwrap_or(0));
    Ok(report)
}

/// Native decompositions against closed-form matrices. A decomposition
/// with other than two CNOTs counts as a failure.
pub fn appendix_a(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport::new(Suite::AppendixA);
    for family in Family::ALL {
        for trial in 0..trials {
            let s = trial_seed(seed, trial);
            let g = random_gate(family, s, family.number())?;
            let native = g.decompose();
            let cnots = native.iter().filter(|x| x.is_cnot()).count();
            let residual = if cnots == 2 {
                phase_invariant_distance(&native_unitary(&native, 2)?, &g.matrix())?
            } else {
                f64::INFINITY
            };
            report.record(&family.to_string(), trial, s, residual, || vec![g.angles().to_vec()]);
        }
    }
    Ok(report)
}

pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> Result<SuiteReport> {
    match suite {
        Suite::Lemma1 => lemma1(trials, seed),
        Suite::Conjecture => conjecture(trials, seed),
        Suite::Mirror => mirror(trials, seed),
        Suite::Downfold => downfold_suite(trials, seed),
        Suite::AppendixA => appendix_a(trials, seed),
    }
}
