//! External tool invocation: executable lookup, timeouts and per-job
//! scratch directories.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_TIMEOUT_SECS: u64 = 60;

/// Environment variables that override the configured executables.
pub const ENV_DART: &str = "DECOMPEVAL_DART";
pub const ENV_SWIFTC: &str = "DECOMPEVAL_SWIFTC";
pub const ENV_DISASSEMBLER: &str = "DECOMPEVAL_DISASSEMBLER";
pub const ENV_SCRATCH: &str = "DECOMPEVAL_SCRATCH";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolchainConfig {
    pub dart_compiler: PathBuf,
    pub swift_compiler: PathBuf,
    pub disassembler: PathBuf,
    pub scratch_root: PathBuf,
    pub timeout_secs: u64,
    /// Optimization-off flag handed to the Swift compiler.
    pub swift_opt_flag: String,
}

impl Default for ToolchainConfig {
    fn default() -> Self {
        ToolchainConfig {
            dart_compiler: "dart".into(),
            swift_compiler: "swiftc".into(),
            disassembler: "objdump".into(),
            scratch_root: std::env::temp_dir().join("decompeval"),
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            swift_opt_flag: "-Onone".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tool {
    Dart,
    Swift,
    Disassembler,
}

impl Tool {
    pub fn name(self) -> &'static str {
        match self {
            Tool::Dart => "dart compiler",
            Tool::Swift => "swift compiler",
            Tool::Disassembler => "disassembler",
        }
    }
}

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("{tool} not found: {path} (set {env} or the toolchain config)")]
    NotFound { tool: &'static str, path: PathBuf, env: &'static str },
    #[error("timeout must be positive")]
    ZeroTimeout,
    #[error("failed to start {program}: {source}")]
    Spawn { program: PathBuf, source: std::io::Error },
    #[error("scratch directory {path}: {source}")]
    Scratch { path: PathBuf, source: std::io::Error },
}

impl ToolchainConfig {
    /// Applies the `DECOMPEVAL_*` environment overrides.
    pub fn with_env_overrides(mut self) -> Self {
        let var = |name| std::env::var_os(name).filter(|v| !v.is_empty()).map(PathBuf::from);
        if let Some(p) = var(ENV_DART) {
            self.dart_compiler = p;
        }
        if let Some(p) = var(ENV_SWIFTC) {
            self.swift_compiler = p;
        }
        if let Some(p) = var(ENV_DISASSEMBLER) {
            self.disassembler = p;
        }
        if let Some(p) = var(ENV_SCRATCH) {
            self.scratch_root = p;
        }
        self
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    fn configured(&self, tool: Tool) -> (&Path, &'static str) {
        match tool {
            Tool::Dart => (&self.dart_compiler, ENV_DART),
            Tool::Swift => (&self.swift_compiler, ENV_SWIFTC),
            Tool::Disassembler => (&self.disassembler, ENV_DISASSEMBLER),
        }
    }

    /// Absolute path of `tool`, searching `PATH` for bare names.
    pub fn resolve(&self, tool: Tool) -> Result<PathBuf, ToolError> {
        let (path, env) = self.configured(tool);
        which::which(path).map_err(|_| ToolError::NotFound { tool: tool.name(), path: path.to_owned(), env })
    }

    /// Checks the timeout and that every listed tool resolves.
    pub fn validate(&self, tools: &[Tool]) -> Result<(), ToolError> {
        if self.timeout_secs == 0 {
            return Err(ToolError::ZeroTimeout);
        }
        for &t in tools {
            self.resolve(t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutput {
    /// `None` when the process was killed or ended by a signal.
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub wall_time: Duration,
    pub timed_out: bool,
}

impl ToolOutput {
    pub fn success(&self) -> bool {
        !self.timed_out && self.exit_code == Some(0)
    }

    /// stderr followed by stdout, trimmed.
    pub fn diagnostics(&self) -> String {
        let mut s = self.stderr.trim_end().to_string();
        let out = self.stdout.trim_end();
        if !out.is_empty() {
            if !s.is_empty() {
                s.push('\n');
            }
            s.push_str(out);
        }
        if self.timed_out {
            if !s.is_empty() {
                s.push('\n');
            }
            s.push_str(&format!("timed out after {:.1}s", self.wall_time.as_secs_f64()));
        }
        s
    }
}

/// Runs `program` with `args` in `cwd`, killing it after `timeout`.
/// Arguments are passed as a vector; no shell is involved.
pub fn run_tool<S: AsRef<std::ffi::OsStr>>(
    program: &Path,
    args: &[S],
    cwd: &Path,
    timeout: Duration,
) -> Result<ToolOutput, ToolError> {
    let start = Instant::now();
    let mut command = Command::new(program);
    // Compiler drivers fork helpers; a fresh process group lets a timeout
    // take them down together.
    #[cfg(unix)]
    std::os::unix::process::CommandExt::process_group(&mut command, 0);
    let mut child = command
        .args(args)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| ToolError::Spawn { program: program.to_owned(), source })?;

    fn drain(mut r: impl Read + Send + 'static) -> thread::JoinHandle<String> {
        thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = r.read_to_end(&mut buf);
            String::from_utf8_lossy(&buf).into_owned()
        })
    }
    let out = drain(child.stdout.take().expect("stdout is piped"));
    let err = drain(child.stderr.take().expect("stderr is piped"));

    let mut timed_out = false;
    let mut poll = Duration::from_millis(2);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if start.elapsed() >= timeout => {
                timed_out = true;
                #[cfg(unix)]
                // SAFETY: plain syscall on the group id of a child we spawned.
                unsafe {
                    libc::kill(-(child.id() as i32), libc::SIGKILL);
                }
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            Ok(None) => {
                thread::sleep(poll);
                poll = (poll * 2).min(Duration::from_millis(50));
            }
            Err(_) => break None,
        }
    };
    let wall_time = start.elapsed();
    Ok(ToolOutput {
        exit_code: status.and_then(|s| s.code()),
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
        wall_time,
        timed_out,
    })
}

static SCRATCH_COUNTER: AtomicU64 = AtomicU64::new(0);

/// A private working directory for one job. The name is derived from the
/// job's id; call [`ScratchDir::finish`] to delete it after a success.
/// Directories of failed or abandoned jobs stay for inspection.
#[derive(Debug)]
pub struct ScratchDir {
    path: PathBuf,
}

impl ScratchDir {
    pub fn create(root: &Path, id: &str) -> Result<Self, ToolError> {
        let safe: String = id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .take(48)
            .collect();
        let digest = Sha256::digest(id.as_bytes());
        let n = SCRATCH_COUNTER.fetch_add(1, Ordering::Relaxed);
        let name = format!(
            "{safe}-{:02x}{:02x}{:02x}{:02x}-{}-{n}",
            digest[0],
            digest[1],
            digest[2],
            digest[3],
            std::process::id()
        );
        let path = root.join(name);
        fs::create_dir_all(&path).map_err(|source| ToolError::Scratch { path: path.clone(), source })?;
        Ok(ScratchDir { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Removes the directory on success; keeps it otherwise and returns its
    /// path.
    pub fn finish(self, success: bool) -> Option<PathBuf> {
        if success {
            let _ = fs::remove_dir_all(&self.path);
            None
        } else {
            Some(self.path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_and_captures() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_tool(
            Path::new("/bin/sh"),
            &["-c", "echo out; echo err >&2; exit 3"],
            dir.path(),
            Duration::from_secs(10),
        )
        .unwrap();
        assert_eq!(out.exit_code, Some(3));
        assert_eq!(out.stdout, "out\n");
        assert_eq!(out.diagnostics(), "err\nout");
        assert!(!out.success());
    }

    #[test]
    fn kills_on_timeout() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_tool(Path::new("/bin/sh"), &["-c", "sleep 5"], dir.path(), Duration::from_millis(100)).unwrap();
        assert!(out.timed_out);
        assert!(out.wall_time < Duration::from_secs(4));
        assert!(out.diagnostics().contains("timed out"));
    }

    #[test]
    fn missing_program_is_a_spawn_error() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_tool(Path::new("/nonexistent/tool"), &[] as &[&str], dir.path(), Duration::from_secs(1));
        assert!(matches!(r, Err(ToolError::Spawn { .. })));
    }

    #[test]
    fn scratch_dirs_are_distinct_and_kept_on_failure() {
        let root = tempfile::tempdir().unwrap();
        let a = ScratchDir::create(root.path(), "rc/001").unwrap();
        let b = ScratchDir::create(root.path(), "rc/001").unwrap();
        assert_ne!(a.path(), b.path());
        assert!(a.path().file_name().unwrap().to_str().unwrap().starts_with("rc_001-"));
        let kept = a.finish(false).unwrap();
        assert!(kept.exists());
        let p = b.path().to_owned();
        assert!(b.finish(true).is_none());
        assert!(!p.exists());
    }

    #[test]
    fn resolution() {
        let cfg = ToolchainConfig {
            disassembler: "sh".into(),
            dart_compiler: "/nonexistent/dart".into(),
            ..Default::default()
        };
        assert!(cfg.resolve(Tool::Disassembler).is_ok());
        let e = cfg.validate(&[Tool::Dart]).unwrap_err().to_string();
        assert!(e.contains(ENV_DART), "{e}");
        let zero = ToolchainConfig { timeout_secs: 0, ..Default::default() };
        assert!(matches!(zero.validate(&[]), Err(ToolError::ZeroTimeout)));
    }
}
