//! Run configuration files (TOML).

use std::path::{Path, PathBuf};

use cdcirc::hamiltonian::{DriveSpec, Field, ModelSpec, Sampling, TimeGrid};
use cdcirc::linalg::Axis;
use cdcirc::optimize::OptimizeOptions;
use cdcirc::quench::{Engine, InitialState, Observable, QuenchConfig};
use cdcirc::synth::{TargetKind, TrajectoryMode, TrajectoryOptions};
use cdcirc::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub run: RunBlock,
    #[serde(default)]
    pub quench: QuenchBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
pub enum Unit {
    #[default]
    #[serde(rename = "eV")]
    Ev,
    #[serde(rename = "meV")]
    MeV,
}

impl Unit {
    fn to_ev(self) -> f64 {
        match self {
            Unit::Ev => 1.0,
            Unit::MeV => 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default)]
    pub unit: Unit,
    #[serde(default)]
    pub jx: f64,
    #[serde(default)]
    pub jy: f64,
    #[serde(default)]
    pub jz: f64,
    pub field: Option<FieldBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveKind {
    Constant,
    Cosine,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldBlock {
    pub axis: Axis,
    pub drive: DriveKind,
    pub h0: Option<f64>,
    /// Angular frequency, 1/fs.
    pub omega: Option<f64>,
    /// Sample times in fs.
    pub times: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub n_spins: usize,
    pub dt_fs: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_engine")]
    pub engine: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_restarts")]
    pub max_restarts: usize,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub target: TargetKind,
    #[serde(default)]
    pub mode: TrajectoryMode,
}

fn default_steps() -> usize {
    cdcirc::quench::DEFAULT_STEPS
}

fn default_engine() -> String {
    Engine::ConstantDepth.name().into()
}

fn default_tol() -> f64 {
    OptimizeOptions::default().tol
}

fn default_restarts() -> usize {
    OptimizeOptions::default().max_restarts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    #[default]
    Plus,
    Neel,
    /// Ground state of `initial_model`, or of the evolution model at t = 0.
    Ground,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchBlock {
    #[serde(default)]
    pub initial: InitialKind,
    #[serde(default = "default_observable")]
    pub observable: String,
    pub initial_model: Option<ModelBlock>,
}

impl Default for QuenchBlock {
    fn default() -> Self {
        Self { initial: InitialKind::default(), observable: default_observable(), initial_model: None }
    }
}

fn default_observable() -> String {
    Observable::MagnetizationX.name().into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Qasm,
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
    #[serde(default = "all_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: None, formats: all_formats() }
    }
}

fn all_formats() -> Vec<Format> {
    vec![Format::Qasm, Format::Jsonl, Format::Csv]
}

impl OutputBlock {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

impl FieldBlock {
    fn drive(&self, scale: f64) -> Result<DriveSpec> {
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| Error::Config(format!("{:?} drive needs `{key}`", self.drive)));
        let extra = |present: bool, key: &str| {
            if present {
                Err(Error::Config(format!("`{key}` does not apply to a {:?} drive", self.drive)))
            } else {
                Ok(())
            }
        };
        let tabulated = self.times.is_some() || self.values.is_some();
        let drive = match self.drive {
            DriveKind::Constant => {
                extra(self.omega.is_some(), "omega")?;
                extra(tabulated, "times/values")?;
                DriveSpec::Constant { h0: need(self.h0, "h0")? * scale }
            }
            DriveKind::Cosine => {
                extra(tabulated, "times/values")?;
                DriveSpec::Cosine { h0: need(self.h0, "h0")? * scale, omega: need(self.omega, "omega")? }
            }
            DriveKind::Tabulated => {
                extra(self.h0.is_some(), "h0")?;
                extra(self.omega.is_some(), "omega")?;
                let times = self.times.clone().ok_or_else(|| Error::Config("tabulated drive needs `times`".into()))?;
                let values = self.values.as_ref().ok_or_else(|| Error::Config("tabulated drive needs `values`".into()))?;
                DriveSpec::Tabulated { times, values: values.iter().map(|v| v * scale).collect() }
            }
        };
        drive.validate().map_err(as_config)?;
        Ok(drive)
    }
}

impl ModelBlock {
    pub fn to_spec(&self, n_spins: usize) -> Result<ModelSpec> {
        let s = self.unit.to_ev();
        let field = match &self.field {
            Some(f) => Some(Field { axis: f.axis, drive: f.drive(s)? }),
            None => None,
        };
        ModelSpec::new(n_spins, [self.jx * s, self.jy * s, self.jz * s], field).map_err(as_config)
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::Config(m),
        other => other,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Type checks that serde cannot express.
    fn check(&self) -> Result<()> {
        self.model()?;
        self.grid()?;
        self.engine()?;
        self.observable()?;
        if !(self.run.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.run.tol)));
        }
        if self.run.max_restarts == 0 {
            return Err(Error::Config("max_restarts must be at least 1".into()));
        }
        if self.quench.initial_model.is_some() && self.quench.initial != InitialKind::Ground {
            return Err(Error::Config("`initial_model` only applies to initial = \"ground\"".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelSpec> {
        self.model.to_spec(self.run.n_spins)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        let mut g = TimeGrid::new(self.run.dt_fs).map_err(as_config)?;
        g.sampling = self.run.sampling;
        Ok(g)
    }

    pub fn engine(&self) -> Result<Engine> {
        self.run.engine.parse().map_err(as_config)
    }

    pub fn observable(&self) -> Result<Observable> {
        self.quench.observable.parse().map_err(as_config)
    }

    pub fn trajectory_options(&self) -> TrajectoryOptions {
        TrajectoryOptions {
            optimize: OptimizeOptions {
                tol: self.run.tol,
                max_restarts: self.run.max_restarts,
                seed: self.run.seed,
                ..OptimizeOptions::default()
            },
            kind: self.run.target,
            mode: self.run.mode,
        }
    }

    pub fn quench_config(&self, engine: Engine, steps: usize) -> Result<QuenchConfig> {
        let evolution = self.model()?;
        let initial = match self.quench.initial {
            InitialKind::Plus => InitialState::PlusX,
            InitialKind::Neel => InitialState::Neel,
            InitialKind::Ground => InitialState::GroundState(match &self.quench.initial_model {
                Some(m) => m.to_spec(self.run.n_spins)?,
                None => evolution.clone(),
            }),
        };
        Ok(QuenchConfig {
            evolution,
            initial,
            observable: self.observable()?,
            grid: self.grid()?,
            n_steps: steps,
            engine,
            seed: self.run.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\njx = 1.0\n[run]\nn_spins = 3\ndt_fs = 0.1\n";

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.run.steps, 40);
        assert_eq!(c.engine().unwrap(), Engine::ConstantDepth);
        assert_eq!(c.model().unwrap().couplings, [1.0, 0.0, 0.0]);
        assert!(c.output.wants(Format::Qasm) && c.output.dir.is_none());
    }

    #[test]
    fn mev_scales_couplings_and_field() {
        let text = "[model]\nunit = \"meV\"\njx = 2.0\n[model.field]\naxis = \"z\"\ndrive = \"constant\"\nh0 = 4.0\n[run]\nn_spins = 2\ndt_fs = 1.0\n";
        let m = RunConfig::parse(text).unwrap().model().unwrap();
        assert_eq!(m.couplings[0], 2e-3);
        assert_eq!(m.field.unwrap().drive, DriveSpec::Constant { h0: 4e-3 });
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        for bad in [
            format!("{MINIMAL}colour = 1\n"),
            MINIMAL.replace("jx", "jw"),
            MINIMAL.replace("0.1", "-0.1"),
            MINIMAL.replace("= 3", "= \"three\""),
            format!("{MINIMAL}engine = \"warp\"\n"),
            format!("{MINIMAL}[model.field]\naxis = \"z\"\ndrive = \"cosine\"\nh0 = 1.0\n"),
            format!("{MINIMAL}[model.field]\naxis = \"w\"\ndrive = \"constant\"\nh0 = 1.0\n"),
            format!("{MINIMAL}[quench]\nobservable = \"energy\"\n"),
            "[run]\nn_spins = 3\ndt_fs = 0.1\n".to_string(),
        ] {
            assert!(matches!(RunConfig::parse(&bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn tabulated_drive() {
        let text = format!("{MINIMAL}[model.field]\naxis = \"x\"\ndrive = \"tabulated\"\ntimes = [0.0, 1.0]\nvalues = [0.0, 2.0]\n");
        let m = RunConfig::parse(&text).unwrap().model().unwrap();
        assert_eq!(m.field_at(0.5), 1.0);
    }
}
