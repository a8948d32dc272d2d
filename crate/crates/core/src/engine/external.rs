//! Adapter for an external SPICE executable (ngspice, LTspice, ...).
//!
//! The engine is invoked through a command template with `{netlist_path}`
//! and optional `{raw_path}` placeholders, so differing batch flags between
//! simulators stay in configuration. Exit code 0 means success; stderr is
//! captured verbatim into the failure error.

use std::io;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::raw::parse_raw;
use super::{Dataset, EngineError, SimulationJob};
use crate::netlist::{render_magnitude, serialize_netlist, Netlist};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineConfig {
    /// e.g. "ngspice -b {netlist_path} -r {raw_path}".
    pub command_template: String,
    /// Where to create the per-job scratch directory; system temp if unset.
    pub working_dir: Option<PathBuf>,
    pub timeout: Duration,
    /// Keep the scratch directory (deck, raw file, logs) after the run.
    pub keep_artifacts: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            command_template: "ngspice -b {netlist_path} -r {raw_path}".to_string(),
            working_dir: None,
            timeout: Duration::from_secs(60),
            keep_artifacts: false,
        }
    }
}

impl EngineConfig {
    pub fn validated(&self) -> Result<(), EngineError> {
        if !self.command_template.contains("{netlist_path}") {
            return Err(EngineError::InvalidConfig(
                "command template must contain {netlist_path}".to_string(),
            ));
        }
        Ok(())
    }
}

/// Ensure the deck carries a .tran directive, injecting one from the
/// analysis spec when absent. The deck's own directive wins.
fn deck_with_tran(netlist: &Netlist, job: &SimulationJob) -> String {
    let has_tran = netlist.directives("tran").next().is_some();
    let mut text = String::new();
    // The first line of a SPICE input file is consumed as the title, so a
    // scratch deck always leads with a throwaway comment line.
    text.push_str("* spicedeck transient job\n");
    text.push_str(&serialize_netlist(netlist));
    if !has_tran {
        let spec = &job.analysis;
        let step = if spec.t_step_hint > 0.0 {
            spec.t_step_hint
        } else {
            spec.t_stop / 1000.0
        };
        let mut tran = format!(
            ".tran {} {}",
            render_magnitude(step),
            render_magnitude(spec.t_stop)
        );
        if spec.t_start_record > 0.0 {
            tran.push(' ');
            tran.push_str(&render_magnitude(spec.t_start_record));
        }
        // Keep the directive ahead of any trailing .end line.
        if let Some(pos) = text.rfind("\n.end") {
            text.insert_str(pos, &format!("\n{tran}"));
        } else {
            text.push_str(&tran);
            text.push('\n');
        }
    }
    text
}

/// Run the job through the configured external engine and parse the raw
/// waveform file it produces.
pub fn run_external(job: &SimulationJob, cfg: &EngineConfig) -> Result<Dataset, EngineError> {
    cfg.validated()?;
    let scratch = match &cfg.working_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            tempfile::Builder::new()
                .prefix("spicedeck-")
                .tempdir_in(dir)?
        }
        None => tempfile::Builder::new().prefix("spicedeck-").tempdir()?,
    };
    let netlist_path = scratch.path().join("job.cir");
    let raw_path = scratch.path().join("job.raw");
    std::fs::write(&netlist_path, deck_with_tran(&job.netlist, job))?;

    let argv = expand_template(&cfg.command_template, &netlist_path, &raw_path);
    if argv.is_empty() {
        return Err(EngineError::InvalidConfig("empty command template".into()));
    }
    let mut command = Command::new(&argv[0]);
    command
        .args(&argv[1..])
        .current_dir(scratch.path())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped());

    let mut child = match command.spawn() {
        Ok(child) => child,
        Err(err) if err.kind() == io::ErrorKind::NotFound => {
            return Err(EngineError::EngineNotFound(argv[0].clone()));
        }
        Err(err) => return Err(err.into()),
    };

    let started = Instant::now();
    let status = loop {
        match child.try_wait()? {
            Some(status) => break status,
            None => {
                if started.elapsed() > cfg.timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(EngineError::EngineTimeout {
                        timeout: cfg.timeout,
                    });
                }
                std::thread::sleep(Duration::from_millis(10));
            }
        }
    };

    let stderr = child
        .stderr
        .take()
        .map(|mut pipe| {
            use std::io::Read;
            let mut buf = String::new();
            let _ = pipe.read_to_string(&mut buf);
            buf
        })
        .unwrap_or_default();

    if !status.success() {
        let result = Err(EngineError::EngineFailure {
            code: status.code(),
            stderr,
        });
        keep_or_drop(scratch, cfg);
        return result;
    }

    if !raw_path.exists() {
        keep_or_drop(scratch, cfg);
        return Err(EngineError::RawMissing);
    }
    let bytes = std::fs::read(&raw_path)?;
    let dataset = parse_raw(&bytes);
    keep_or_drop(scratch, cfg);
    dataset
}

fn keep_or_drop(scratch: tempfile::TempDir, cfg: &EngineConfig) {
    if cfg.keep_artifacts {
        let path = scratch.keep();
        eprintln!("spicedeck: kept engine artifacts in {}", path.display());
    }
}

/// Substitute placeholders token by token, so paths with spaces inside a
/// placeholder survive while the template itself stays whitespace-split.
fn expand_template(template: &str, netlist_path: &Path, raw_path: &Path) -> Vec<String> {
    template
        .split_whitespace()
        .map(|token| {
            token
                .replace("{netlist_path}", &netlist_path.to_string_lossy())
                .replace("{raw_path}", &raw_path.to_string_lossy())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{EngineKind, TransientSpec};
    use crate::netlist::parse_netlist;

    fn job(deck: &str) -> SimulationJob {
        SimulationJob {
            netlist: parse_netlist(deck).unwrap(),
            analysis: TransientSpec {
                t_stop: 1e-3,
                t_step_hint: 1e-6,
                t_start_record: 0.0,
            },
            engine: EngineKind::Reference,
        }
    }

    #[test]
    fn missing_binary_is_engine_not_found() {
        let cfg = EngineConfig {
            command_template: "definitely-not-a-spice-binary {netlist_path}".to_string(),
            ..EngineConfig::default()
        };
        let err = run_external(&job("R1 a b 1k\n.end"), &cfg).unwrap_err();
        assert!(matches!(err, EngineError::EngineNotFound(_)));
    }

    #[test]
    fn template_without_placeholder_rejected() {
        let cfg = EngineConfig {
            command_template: "ngspice -b".to_string(),
            ..EngineConfig::default()
        };
        assert!(matches!(
            run_external(&job("R1 a b 1k\n.end"), &cfg),
            Err(EngineError::InvalidConfig(_))
        ));
    }

    #[test]
    fn nonzero_exit_captures_stderr() {
        // `false` exists everywhere and exits 1 silently; stderr stays empty
        // but the failure kind and exit code must be reported.
        let cfg = EngineConfig {
            command_template: "false {netlist_path}".to_string(),
            ..EngineConfig::default()
        };
        match run_external(&job("R1 a b 1k\n.end"), &cfg) {
            Err(EngineError::EngineFailure { code, .. }) => assert_eq!(code, Some(1)),
            other => panic!("expected EngineFailure, got {other:?}"),
        }
    }

    #[test]
    fn successful_run_without_raw_file_is_raw_missing() {
        let cfg = EngineConfig {
            command_template: "true {netlist_path}".to_string(),
            ..EngineConfig::default()
        };
        assert!(matches!(
            run_external(&job("R1 a b 1k\n.end"), &cfg),
            Err(EngineError::RawMissing)
        ));
    }

    #[test]
    fn timeout_kills_the_engine() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("slow-engine.sh");
        std::fs::write(&script, "#!/bin/sh\nsleep 5\n").unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let cfg = EngineConfig {
            command_template: format!("{} {{netlist_path}}", script.display()),
            timeout: Duration::from_millis(100),
            ..EngineConfig::default()
        };
        let started = Instant::now();
        let err = run_external(&job("R1 a b 1k\n.end"), &cfg).unwrap_err();
        assert!(matches!(err, EngineError::EngineTimeout { .. }));
        assert!(started.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn tran_injected_when_absent() {
        let j = job("R1 a b 1k\n.end");
        let text = deck_with_tran(&j.netlist, &j);
        assert!(text.contains(".tran 1u 1m"), "{text}");
        assert!(text.trim_end().ends_with(".end"));

        let j2 = job("R1 a b 1k\n.tran 10n 2m\n.end");
        let text2 = deck_with_tran(&j2.netlist, &j2);
        assert_eq!(text2.matches(".tran").count(), 1);
        assert!(text2.contains(".tran 10n 2m"));
    }
}
