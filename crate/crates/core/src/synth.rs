//! Fitting constant-depth template angles to time-evolution targets.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::FitProblem;
use crate::circuit::{eligible_family, naive_step, Circuit, Template};
use crate::error::{Error, Result};
use crate::hamiltonian::{check_size, hamiltonian_matrix, ModelSpec, TimeGrid, DEFAULT_SIZE_CAP};
use crate::linalg::{expm_hermitian, identity, CMatrix};
use crate::optimize::OptimizeOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    /// Product of exact exponentials of the Hamiltonian sampled per step.
    #[default]
    Exact,
    /// Unitary of the naive Trotter circuit.
    Trotterized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub spec: ModelSpec,
    pub grid: TimeGrid,
    pub step: usize,
    pub kind: TargetKind,
}

impl TargetSpec {
    pub fn new(spec: ModelSpec, grid: TimeGrid, step: usize, kind: TargetKind) -> Result<Self> {
        if step == 0 {
            return Err(Error::InvalidInput("target step index must be at least 1".into()));
        }
        spec.validate()?;
        Ok(Self { spec, grid, step, kind })
    }
}

/// Unitary of the single step `step` (1-based).
pub fn step_unitary(spec: &ModelSpec, grid: &TimeGrid, step: usize, kind: TargetKind) -> Result<CMatrix> {
    match kind {
        TargetKind::Exact => {
            let h = hamiltonian_matrix(spec, grid.sample_time(step))?;
            expm_hermitian(&h, grid.dt / grid.hbar)
        }
        TargetKind::Trotterized => naive_step(spec, grid, step)?.unitary(),
    }
}

/// Cumulative targets `U(k dt)` for `k = 1..=n_steps`.
pub fn target_unitaries(spec: &ModelSpec, grid: &TimeGrid, n_steps: usize, kind: TargetKind) -> Result<Vec<CMatrix>> {
    check_size(spec.n_spins, DEFAULT_SIZE_CAP)?;
    if kind == TargetKind::Trotterized {
        eligible_family(spec)?;
    }
    let fixed = if spec.is_time_independent() { Some(step_unitary(spec, grid, 1, kind)?) } else { None };
    let mut acc = identity(1 << spec.n_spins);
    let mut out = Vec::with_capacity(n_steps);
    for step in 1..=n_steps {
        let u = match &fixed {
            Some(u) => u.clone(),
            None => step_unitary(spec, grid, step, kind)?,
        };
        acc = u * acc;
        out.push(acc.clone());
    }
    Ok(out)
}

pub fn target_unitary(t: &TargetSpec) -> Result<CMatrix> {
    let mut all = target_unitaries(&t.spec, &t.grid, t.step, t.kind)?;
    Ok(all.pop().expect("step >= 1"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub step: usize,
    pub angles: Vec<f64>,
    pub cost: f64,
    pub restarts: usize,
    pub seed: u64,
    pub evaluations: usize,
    pub converged: bool,
    /// Seconds; not part of the serialized report so reports stay
    /// reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

impl SynthesisResult {
    pub fn circuit(&self, template: &Template) -> Result<Circuit> {
        let mut c = template.instantiate(&self.angles)?;
        c.metadata.insert("step".into(), self.step.to_string());
        Ok(c)
    }

    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence { best_cost: self.cost, restarts: self.restarts, best_angles: self.angles })
        }
    }
}

/// Seed used for step `step` of a run seeded with `seed`.
pub fn step_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_add(step as u64)
}

/// Fits `template` to `target`. Never fails on non-convergence; the result
/// is flagged instead.
pub fn fit(template: &Template, target: &CMatrix, step: usize, initial: Option<Vec<f64>>, opts: &OptimizeOptions) -> Result<SynthesisResult> {
    let start = Instant::now();
    let structure = template.structure();
    let problem = FitProblem::new(&structure, target)?;
    if let Some(x) = &initial {
        if x.len() != template.param_count() {
            return Err(Error::InvalidInput(format!(
                "initial guess has {} angles, template takes {}",
                x.len(),
                template.param_count()
            )));
        }
    }
    let m = problem.solve(initial, opts);
    Ok(SynthesisResult {
        step,
        angles: m.x,
        cost: m.cost,
        restarts: m.restarts,
        seed: opts.seed,
        evaluations: m.evaluations,
        converged: m.converged,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn check_template(spec: &ModelSpec, template: &Template) -> Result<()> {
    let family = eligible_family(spec)?;
    if family != template.family() || spec.n_spins != template.n_qubits() {
        return Err(Error::FamilyMismatch(format!(
            "model needs a {}-qubit {family} template, got {}-qubit {}",
            spec.n_spins,
            template.n_qubits(),
            template.family()
        )));
    }
    Ok(())
}

/// Starting point for step `step` with no warm start: one Trotter step,
/// with coupling and frame angles scaled by the step count.
pub fn cold_start(template: &Template, spec: &ModelSpec, grid: &TimeGrid, step: usize) -> Result<Vec<f64>> {
    let mut p = template.trotter_step_params(spec, grid, 1)?;
    if step > 1 {
        if template.frame_axis().is_some() {
            // the frame carries the field integrated over all steps so far
            let n = template.n_qubits();
            let total: f64 = (1..=step).map(|k| template.trotter_step_params(spec, grid, k).map(|q| q[0])).sum::<Result<f64>>()?;
            p[..n].iter_mut().for_each(|a| *a = total);
        }
        let frame = if template.frame_axis().is_some() { template.n_qubits() } else { 0 };
        p[frame..].iter_mut().for_each(|a| *a *= step as f64);
    }
    Ok(p)
}

/// Compiles `U(step dt)` into the template.
pub fn synthesize(t: &TargetSpec, template: &Template, opts: &OptimizeOptions) -> Result<SynthesisResult> {
    check_template(&t.spec, template)?;
    let target = target_unitary(t)?;
    let initial = cold_start(template, &t.spec, &t.grid, t.step)?;
    fit(template, &target, t.step, Some(initial), opts)?.into_result()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajectoryMode {
    /// Each step starts from the previous step's angles.
    #[default]
    Sequential,
    /// Steps run concurrently from scaled single-step angles.
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOptions {
    pub optimize: OptimizeOptions,
    pub kind: TargetKind,
    pub mode: TrajectoryMode,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self { optimize: OptimizeOptions::default(), kind: TargetKind::Exact, mode: TrajectoryMode::Sequential }
    }
}

/// One result per step `1..=n_steps`. Step `k` uses seed
/// `step_seed(opts.seed, k)` in both modes. Non-converged steps are
/// flagged, never fatal.
pub fn synthesize_trajectory(
    spec: &ModelSpec,
    grid: &TimeGrid,
    n_steps: usize,
    opts: &TrajectoryOptions,
) -> Result<(Template, Vec<SynthesisResult>)> {
    let template = Template::new(spec.n_spins, eligible_family(spec)?)?;
    let targets = target_unitaries(spec, grid, n_steps, opts.kind)?;
    let step_opts = |k: usize| OptimizeOptions { seed: step_seed(opts.optimize.seed, k), ..opts.optimize.clone() };
    let results = match opts.mode {
        TrajectoryMode::Sequential => {
            let mut out: Vec<SynthesisResult> = Vec::with_capacity(n_steps);
            for (i, target) in targets.iter().enumerate() {
                let k = i + 1;
                let initial = match out.last() {
                    Some(prev) => prev.angles.clone(),
                    None => cold_start(&template, spec, grid, k)?,
                };
                out.push(fit(&template, target, k, Some(initial), &step_opts(k))?);
            }
            out
        }
        TrajectoryMode::Parallel => targets
            .par_iter()
            .enumerate()
            .map(|(i, target)| {
                let k = i + 1;
                fit(&template, target, k, Some(cold_start(&template, spec, grid, k)?), &step_opts(k))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok((template, results))
}

/// One JSON object per line.
pub fn report_jsonl(results: &[SynthesisResult]) -> Result<String> {
    let mut s = String::new();
    for r in results {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{DriveSpec, Field};
    use crate::linalg::{max_abs_diff, phase_invariant_distance, Axis, C64};
    use crate::matchgate::Family;

    fn tfim(n: usize) -> ModelSpec {
        let jx = 0.01183898;
        ModelSpec::new(
            n,
            [jx, 0.0, 0.0],
            Some(Field { axis: Axis::Z, drive: DriveSpec::Cosine { h0: 2.0 * jx, omega: 0.0048 } }),
        )
        .unwrap()
    }

    fn xy(n: usize) -> ModelSpec {
        ModelSpec::new(n, [-1.0, -1.0, 0.0], None).unwrap()
    }

    #[test]
    fn zero_hamiltonian_gives_identity() {
        let spec = ModelSpec::new(3, [0.0; 3], None).unwrap();
        let grid = TimeGrid::new(0.5).unwrap();
        let t = TargetSpec::new(spec.clone(), grid.clone(), 4, TargetKind::Exact).unwrap();
        assert!(max_abs_diff(&target_unitary(&t).unwrap(), &identity(8)) < 1e-15);
        let template = Template::new(3, Family::F1).unwrap();
        let r = synthesize(&t, &template, &OptimizeOptions::default()).unwrap();
        assert!(r.cost <= 1e-12);
        assert!(r.angles.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn time_independent_target_is_a_power() {
        let spec = ModelSpec::new(3, [0.3, 0.0, 0.5], None).unwrap();
        let grid = TimeGrid::new(0.7).unwrap();
        let one = step_unitary(&spec, &grid, 1, TargetKind::Exact).unwrap();
        let all = target_unitaries(&spec, &grid, 3, TargetKind::Exact).unwrap();
        assert!(max_abs_diff(&all[2], &(&one * &one * &one)) < 1e-10);
    }

    #[test]
    fn tfim_step_matches_series_expansion() {
        let spec = tfim(3);
        let grid = TimeGrid::new(3.0).unwrap();
        let h = hamiltonian_matrix(&spec, 0.0).unwrap();
        // exp(-i H dt / hbar) by a 20-term Taylor series
        let a = h * C64::new(0.0, -grid.dt / grid.hbar);
        let mut term = identity(8);
        let mut sum = identity(8);
        for k in 1..=20 {
            term = &term * &a / C64::new(k as f64, 0.0);
            sum += &term;
        }
        let t = TargetSpec::new(spec, grid, 1, TargetKind::Exact).unwrap();
        assert!(max_abs_diff(&target_unitary(&t).unwrap(), &sum) < 1e-9);
    }

    #[test]
    fn trotterized_target_is_naive_unitary() {
        let spec = tfim(3);
        let grid = TimeGrid::new(3.0).unwrap();
        let t = TargetSpec::new(spec.clone(), grid.clone(), 3, TargetKind::Trotterized).unwrap();
        let naive = crate::circuit::naive_circuit(&spec, &grid, 3).unwrap().unitary().unwrap();
        assert!(max_abs_diff(&target_unitary(&t).unwrap(), &naive) < 1e-12);
        let bad = ModelSpec::new(3, [1.0, 1.0, 1.0], None).unwrap();
        let t = TargetSpec::new(bad, grid, 1, TargetKind::Trotterized).unwrap();
        assert!(matches!(target_unitary(&t), Err(Error::IneligibleModel(_))));
    }

    #[test]
    fn xy_single_step_synthesizes() {
        let spec = xy(3);
        let grid = TimeGrid::new(0.025).unwrap();
        let t = TargetSpec::new(spec, grid, 1, TargetKind::Exact).unwrap();
        let template = Template::new(3, Family::F7).unwrap();
        let r = synthesize(&t, &template, &OptimizeOptions::default()).unwrap();
        assert!(r.cost <= 1e-9, "{}", r.cost);
        let u = r.circuit(&template).unwrap().unitary().unwrap();
        assert!(phase_invariant_distance(&u, &target_unitary(&t).unwrap()).unwrap() <= 1e-9);
    }

    #[test]
    fn template_must_match_model() {
        let t = TargetSpec::new(xy(3), TimeGrid::new(0.025).unwrap(), 1, TargetKind::Exact).unwrap();
        let wrong = Template::new(3, Family::F1).unwrap();
        assert!(matches!(synthesize(&t, &wrong, &OptimizeOptions::default()), Err(Error::FamilyMismatch(_))));
    }

    #[test]
    fn global_phase_does_not_change_cost() {
        let spec = tfim(3);
        let grid = TimeGrid::new(3.0).unwrap();
        let target = target_unitaries(&spec, &grid, 2, TargetKind::Exact).unwrap().pop().unwrap();
        let template = Template::new(3, Family::F10).unwrap();
        let p = cold_start(&template, &spec, &grid, 2).unwrap();
        let s = template.structure();
        let a = FitProblem::new(&s, &target).unwrap().cost(&p);
        let b = FitProblem::new(&s, &(target * C64::from_polar(1.0, 0.7))).unwrap().cost(&p);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn empty_trajectory() {
        let (_, r) = synthesize_trajectory(&xy(3), &TimeGrid::new(0.025).unwrap(), 0, &TrajectoryOptions::default()).unwrap();
        assert!(r.is_empty());
        assert_eq!(report_jsonl(&r).unwrap(), "");
    }

    #[test]
    fn trajectory_is_deterministic_and_constant_depth() {
        let spec = tfim(3);
        let grid = TimeGrid::new(3.0).unwrap();
        let opts = TrajectoryOptions::default();
        let (template, a) = synthesize_trajectory(&spec, &grid, 6, &opts).unwrap();
        let (_, b) = synthesize_trajectory(&spec, &grid, 6, &opts).unwrap();
        assert_eq!(report_jsonl(&a).unwrap(), report_jsonl(&b).unwrap());
        for r in &a {
            assert!(r.converged && r.cost <= 1e-9, "step {} cost {}", r.step, r.cost);
            assert_eq!(r.circuit(&template).unwrap().decomposed().cnot_count(), 6);
        }
    }
}
