//! Command implementations behind the `cdcirc` binary. Each command writes
//! its human-readable output to `w` and returns the process exit code.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use cdcirc::hamiltonian::classify;
use cdcirc::qasm::{count_cx, emit_qasm};
use cdcirc::quench::{comparison_csv, run_quench, Engine};
use cdcirc::synth::{report_jsonl, synthesize_trajectory};
use cdcirc::verify::{run_suite, Suite};
use cdcirc::{Error, Result};

pub mod config;

use config::{Format, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INELIGIBLE: u8 = 2;
pub const EXIT_NONCONVERGENCE: u8 = 3;

/// Environment variable naming the output directory when neither `--out`
/// nor the config's `[output] dir` is given.
pub const OUT_DIR_ENV: &str = "CDCIRC_OUT";
pub const DEFAULT_OUT_DIR: &str = "out";

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::IneligibleModel(_) | Error::IneligibleForDownfold(_) => EXIT_INELIGIBLE,
        Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
        _ => EXIT_USAGE,
    }
}

/// `--out`, then the config, then `CDCIRC_OUT`, then `./out`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: Option<&RunConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = cfg.and_then(|c| c.output.dir.clone()) {
        return p;
    }
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT_DIR), PathBuf::from)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

pub fn classify_cmd(cfg: &RunConfig, w: &mut dyn Write) -> Result<u8> {
    let e = classify(&cfg.model()?);
    writeln!(w, "{e}")?;
    Ok(if e.eligible { EXIT_OK } else { EXIT_INELIGIBLE })
}

pub fn compile_cmd(cfg: &RunConfig, steps: usize, out: &Path, w: &mut dyn Write) -> Result<u8> {
    let spec = cfg.model()?;
    let verdict = classify(&spec);
    if !verdict.eligible {
        return Err(Error::IneligibleModel(verdict.to_string()));
    }
    let (template, results) = synthesize_trajectory(&spec, &cfg.grid()?, steps, &cfg.trajectory_options())?;
    fs::create_dir_all(out)?;
    if cfg.output.wants(Format::Qasm) {
        for r in &results {
            let qasm = emit_qasm(&r.circuit(&template)?.decomposed())?;
            write_file(out, &format!("step_{}.qasm", r.step), &qasm)?;
        }
    }
    if cfg.output.wants(Format::Jsonl) {
        write_file(out, "synthesis.jsonl", &report_jsonl(&results)?)?;
    }
    let worst = results.iter().map(|r| r.cost).fold(0.0, f64::max);
    writeln!(
        w,
        "{} step(s), family {}, {} gates and {} cx per step, worst cost {worst:.3e}, output in {}",
        results.len(),
        template.family(),
        template.gate_count(),
        template.cnot_count(),
        out.display()
    )?;
    let failed: Vec<_> = results.iter().filter(|r| !r.converged).collect();
    for r in &failed {
        writeln!(w, "step {} did not converge: cost {:.3e} after {} restart(s)", r.step, r.cost, r.restarts)?;
    }
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_NONCONVERGENCE })
}

/// Number of `cx` lines in a written QASM file.
pub fn qasm_file_cx(path: &Path) -> Result<usize> {
    Ok(count_cx(&fs::read_to_string(path)?))
}

pub fn quench_cmd(cfg: &RunConfig, engine: Option<Engine>, steps: Option<usize>, out: &Path, w: &mut dyn Write) -> Result<u8> {
    let engine = match engine {
        Some(e) => e,
        None => cfg.engine()?,
    };
    let steps = steps.unwrap_or(cfg.run.steps);
    let opts = cfg.trajectory_options();
    let series = run_quench(&cfg.quench_config(engine, steps)?, &opts)?;
    let csv = cfg.output.wants(Format::Csv);
    if csv {
        write_file(out, &format!("quench_{engine}.csv"), &series.to_csv())?;
    }
    let last = series.rows.last().map_or(f64::NAN, |r| r.value);
    writeln!(w, "{engine}: {} rows of {}, final value {last:.6}", series.rows.len(), series.observable.name())?;
    if engine == Engine::ConstantDepth {
        let reference = run_quench(&cfg.quench_config(Engine::ExactReference, steps)?, &opts)?;
        if csv {
            write_file(out, "quench_comparison.csv", &comparison_csv(&series, &reference)?)?;
        }
        writeln!(w, "max |delta| vs {}: {:.3e}", Engine::ExactReference, series.max_abs_deviation(&reference)?)?;
    }
    let flagged = series.rows.iter().filter(|r| r.flagged).count();
    if flagged > 0 {
        writeln!(w, "{flagged} step(s) flagged as not converged")?;
        return Ok(EXIT_NONCONVERGENCE);
    }
    Ok(EXIT_OK)
}

/// Failures are also written as JSON to `out` so they can be replayed.
pub fn verify_cmd(suite: Suite, trials: usize, seed: u64, out: &Path, w: &mut dyn Write) -> Result<u8> {
    let report = run_suite(suite, trials, seed)?;
    write!(w, "{report}")?;
    if report.ok() {
        return Ok(EXIT_OK);
    }
    let path = write_file(out, &format!("verify_{suite}_failures.json"), &serde_json::to_string_pretty(&report.failures)?)?;
    writeln!(w, "failure details written to {}", path.display())?;
    Ok(EXIT_NONCONVERGENCE)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::parse(text).unwrap()
    }

    const XY3: &str = "[model]\njx = -1.0\njy = -1.0\n[run]\nn_spins = 3\ndt_fs = 0.025\n";

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::IneligibleModel("x".into())), EXIT_INELIGIBLE);
        let e = Error::NonConvergence { best_cost: 1.0, restarts: 1, best_angles: vec![] };
        assert_eq!(exit_code(&e), EXIT_NONCONVERGENCE);
    }

    #[test]
    fn out_dir_precedence() {
        let mut c = cfg(XY3);
        assert_eq!(resolve_out_dir(Some(Path::new("a")), Some(&c)), PathBuf::from("a"));
        c.output.dir = Some("b".into());
        assert_eq!(resolve_out_dir(None, Some(&c)), PathBuf::from("b"));
    }

    #[test]
    fn classify_reports_family() {
        let mut buf = Vec::new();
        assert_eq!(classify_cmd(&cfg(XY3), &mut buf).unwrap(), EXIT_OK);
        assert!(String::from_utf8(buf).unwrap().starts_with("eligible, family F7"));
        let mut buf = Vec::new();
        let heis = XY3.replace("jy = -1.0", "jy = -1.0\njz = 0.5");
        assert_eq!(classify_cmd(&cfg(&heis), &mut buf).unwrap(), EXIT_INELIGIBLE);
        assert!(String::from_utf8(buf).unwrap().contains("JxJyJz"));
    }

    #[test]
    fn compile_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut buf = Vec::new();
        assert_eq!(compile_cmd(&cfg(XY3), 2, dir.path(), &mut buf).unwrap(), EXIT_OK);
        for k in 1..=2 {
            assert_eq!(qasm_file_cx(&dir.path().join(format!("step_{k}.qasm"))).unwrap(), 6);
        }
        let report = fs::read_to_string(dir.path().join("synthesis.jsonl")).unwrap();
        assert_eq!(report.lines().count(), 2);
    }
}
