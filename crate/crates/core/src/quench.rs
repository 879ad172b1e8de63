//! Statevector quench simulations: transverse-field Ising and XY protocols,
//! magnetization observables and CSV output.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::naive_circuit;
use crate::error::{Error, Result};
use crate::hamiltonian::{ground_state, hamiltonian_matrix, DriveSpec, Field, ModelSpec, TimeGrid};
use crate::linalg::{Axis, Statevector, C64, ZERO};
use crate::synth::{step_unitary, synthesize_trajectory, TargetKind, TrajectoryOptions};

/// Ising coupling of the driven protocol, eV.
pub const TFIM_JX_EV: f64 = 11.83898e-3;
/// Drive angular frequency of the driven protocol, 1/fs.
pub const TFIM_OMEGA: f64 = 0.0048;
pub const TFIM_DT_FS: f64 = 3.0;
pub const XY_J_EV: f64 = -1.0;
pub const XY_DT_FS: f64 = 0.025;
pub const DEFAULT_STEPS: usize = 40;

/// Ising chain with a cosine-driven z field of amplitude `2 Jx`.
pub fn tfim_spec(n_spins: usize) -> Result<ModelSpec> {
    ModelSpec::new(
        n_spins,
        [TFIM_JX_EV, 0.0, 0.0],
        Some(Field { axis: Axis::Z, drive: DriveSpec::Cosine { h0: 2.0 * TFIM_JX_EV, omega: TFIM_OMEGA } }),
    )
}

/// Isotropic XY chain, no field.
pub fn xy_spec(n_spins: usize) -> Result<ModelSpec> {
    ModelSpec::new(n_spins, [XY_J_EV, XY_J_EV, 0.0], None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    /// Mean of `<X_i>`.
    #[serde(rename = "m_x")]
    MagnetizationX,
    /// Mean of `(-1)^i <Z_i>`, sign `+` on qubit 0.
    #[serde(rename = "m_s")]
    StaggeredZ,
}

impl Observable {
    pub fn evaluate(self, s: &Statevector) -> f64 {
        match self {
            Observable::MagnetizationX => average_magnetization_x(s),
            Observable::StaggeredZ => staggered_magnetization_z(s),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Observable::MagnetizationX => "m_x",
            Observable::StaggeredZ => "m_s",
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m_x" | "mx" => Ok(Observable::MagnetizationX),
            "m_s" | "ms" => Ok(Observable::StaggeredZ),
            _ => Err(Error::InvalidInput(format!("unknown observable {s:?} (expected m_x or m_s)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialState {
    /// `|+>^N`, the x-polarized representative of the Ising ground space.
    PlusX,
    /// `|0101...>` with qubit 0 in `|0>`.
    Neel,
    /// Ground state of the given Hamiltonian at `t = 0`.
    GroundState(ModelSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Engine {
    ExactReference,
    ConstantDepth,
    NaiveTrotter,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::ExactReference => "exactReference",
            Engine::ConstantDepth => "constantDepth",
            Engine::NaiveTrotter => "naiveTrotter",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exactReference" | "exact" => Ok(Engine::ExactReference),
            "constantDepth" | "constant-depth" => Ok(Engine::ConstantDepth),
            "naiveTrotter" | "naive" => Ok(Engine::NaiveTrotter),
            _ => Err(Error::InvalidInput(format!(
                "unknown engine {s:?} (expected exactReference, constantDepth or naiveTrotter)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuenchConfig {
    pub evolution: ModelSpec,
    pub initial: InitialState,
    pub observable: Observable,
    pub grid: TimeGrid,
    pub n_steps: usize,
    pub engine: Engine,
    pub seed: u64,
}

impl QuenchConfig {
    /// Driven Ising protocol: `|+>^N`, `m_x`, 3 fs steps.
    pub fn tfim(n_spins: usize, engine: Engine) -> Result<Self> {
        Ok(Self {
            evolution: tfim_spec(n_spins)?,
            initial: InitialState::PlusX,
            observable: Observable::MagnetizationX,
            grid: TimeGrid::new(TFIM_DT_FS)?,
            n_steps: DEFAULT_STEPS,
            engine,
            seed: 0,
        })
    }

    /// XY protocol: Neel state, `m_s`, 0.025 fs steps.
    pub fn xy(n_spins: usize, engine: Engine) -> Result<Self> {
        Ok(Self {
            evolution: xy_spec(n_spins)?,
            initial: InitialState::Neel,
            observable: Observable::StaggeredZ,
            grid: TimeGrid::new(XY_DT_FS)?,
            n_steps: DEFAULT_STEPS,
            engine,
            seed: 0,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.evolution.n_spins
    }
}

pub fn initial_state(cfg: &QuenchConfig) -> Result<Statevector> {
    let n = cfg.n_spins();
    match &cfg.initial {
        InitialState::PlusX => {
            let amp = C64::new((1u64 << n) as f64, 0.0).sqrt().inv();
            Statevector::from_amplitudes(vec![amp; 1 << n])
        }
        InitialState::Neel => {
            // qubit 0 is the most significant bit and starts in |0>
            let index = (0..n).filter(|q| q % 2 == 1).map(|q| 1usize << (n - 1 - q)).sum();
            Statevector::basis(n, index)
        }
        InitialState::GroundState(h) => {
            if h.n_spins != n {
                return Err(Error::InvalidInput("initial Hamiltonian acts on a different number of spins".into()));
            }
            ground_state(&hamiltonian_matrix(h, 0.0)?)
        }
    }
}

/// Single-qubit Pauli expectations `<sigma_axis>` on every qubit, divided
/// by the squared norm.
fn pauli_expectations(s: &Statevector, axis: Axis) -> Vec<f64> {
    let n = s.n_qubits();
    let amps = s.amplitudes();
    let norm_sq: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    (0..n)
        .map(|q| {
            let bit = 1usize << (n - 1 - q);
            let mut acc = ZERO;
            for (i, a) in amps.iter().enumerate() {
                let j = i ^ bit;
                let up = i & bit == 0;
                let (m, sign) = match axis {
                    Axis::X => (amps[j], C64::new(1.0, 0.0)),
                    Axis::Y => (amps[j], if up { C64::new(0.0, -1.0) } else { C64::new(0.0, 1.0) }),
                    Axis::Z => (*a, C64::new(if up { 1.0 } else { -1.0 }, 0.0)),
                };
                // <i| sigma |.>: row i of sigma acting on the state
                acc += a.conj() * sign * m;
            }
            acc.re / norm_sq
        })
        .collect()
}

pub fn average_magnetization_x(s: &Statevector) -> f64 {
    let e = pauli_expectations(s, Axis::X);
    e.iter().sum::<f64>() / e.len() as f64
}

pub fn staggered_magnetization_z(s: &Statevector) -> f64 {
    let e = pauli_expectations(s, Axis::Z);
    e.iter().enumerate().map(|(i, v)| if i % 2 == 0 { *v } else { -v }).sum::<f64>() / e.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub step: usize,
    pub time_fs: f64,
    pub value: f64,
    pub engine: Engine,
    /// Set when the step's circuit did not reach the synthesis tolerance.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub observable: Observable,
    pub rows: Vec<Row>,
}

/// Runs the quench; `opts` configures synthesis for the constant-depth
/// engine (its seed is replaced by the config seed).
pub fn run_quench(cfg: &QuenchConfig, opts: &TrajectoryOptions) -> Result<TimeSeries> {
    cfg.evolution.validate()?;
    let spec = cfg.evolution.clone();
    let observable = cfg.observable;
    let psi0 = initial_state(cfg)?;
    let grid = &cfg.grid;
    let row = |step: usize, state: &Statevector, flagged: bool| Row {
        step,
        time_fs: step as f64 * grid.dt,
        value: observable.evaluate(state),
        engine: cfg.engine,
        flagged,
    };
    let mut rows = vec![row(0, &psi0, false)];
    match cfg.engine {
        Engine::ExactReference => {
            let mut psi = psi0.clone();
            let fixed = if spec.is_time_independent() { Some(step_unitary(&spec, grid, 1, TargetKind::Exact)?) } else { None };
            for step in 1..=cfg.n_steps {
                let u = match &fixed {
                    Some(u) => u.clone(),
                    None => step_unitary(&spec, grid, step, TargetKind::Exact)?,
                };
                psi = psi.apply_matrix(&u)?;
                rows.push(row(step, &psi, false));
            }
        }
        Engine::NaiveTrotter => {
            let later: Vec<Row> = (1..=cfg.n_steps)
                .into_par_iter()
                .map(|step| {
                    let c = naive_circuit(&spec, grid, step)?.decomposed();
                    let mut amps = psi0.amplitudes().to_vec();
                    c.apply(&mut amps)?;
                    Ok(row(step, &Statevector::from_amplitudes(amps)?, false))
                })
                .collect::<Result<_>>()?;
            rows.extend(later);
        }
        Engine::ConstantDepth => {
            let mut topts = opts.clone();
            topts.optimize.seed = cfg.seed;
            let (template, results) = synthesize_trajectory(&spec, grid, cfg.n_steps, &topts)?;
            let later: Vec<Row> = results
                .par_iter()
                .map(|r| {
                    let c = r.circuit(&template)?.decomposed();
                    let mut amps = psi0.amplitudes().to_vec();
                    c.apply(&mut amps)?;
                    Ok(row(r.step, &Statevector::from_amplitudes(amps)?, !r.converged))
                })
                .collect::<Result<_>>()?;
            rows.extend(later);
        }
    }
    Ok(TimeSeries { observable, rows })
}

/// `v` with 12 significant digits in positional notation.
pub fn sig12(v: f64) -> String {
    let v = v + 0.0;
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { format!("{:.11}", 0.0) } else { v.to_string() };
    }
    let decimals = (11 - v.abs().log10().floor() as i32).max(0) as usize;
    format!("{v:.decimals$}")
}

impl TimeSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,time_fs,observable,engine,cost_flag\n");
        for r in &self.rows {
            let flag = if r.flagged { "nonconverged" } else { "ok" };
            let _ = writeln!(s, "{},{},{},{},{flag}", r.step, sig12(r.time_fs), sig12(r.value), r.engine);
        }
        s
    }

    pub fn max_abs_deviation(&self, other: &TimeSeries) -> Result<f64> {
        if self.rows.len() != other.rows.len() {
            return Err(Error::DimMismatch("time series differ in length".into()));
        }
        Ok(self.rows.iter().zip(&other.rows).map(|(a, b)| (a.value - b.value).abs()).fold(0.0, f64::max))
    }
}

/// Side-by-side table of a series against a reference series.
pub fn comparison_csv(series: &TimeSeries, reference: &TimeSeries) -> Result<String> {
    if series.rows.len() != reference.rows.len() {
        return Err(Error::DimMismatch("time series differ in length".into()));
    }
    let engine = series.rows.first().map_or("series", |r| r.engine.name());
    let reference_name = reference.rows.first().map_or("reference", |r| r.engine.name());
    let mut s = format!("step,time_fs,{engine},{reference_name},abs_delta\n");
    for (a, b) in series.rows.iter().zip(&reference.rows) {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            a.step,
            sig12(a.time_fs),
            sig12(a.value),
            sig12(b.value),
            sig12((a.value - b.value).abs())
        );
    }
    Ok(s)
}
