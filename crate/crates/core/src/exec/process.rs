//! Running shell commands with a wall-clock limit.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProcessStatus {
    Exited(i32),
    Signaled(i32),
    TimedOut,
    SpawnFailed(String),
}

#[derive(Debug, Clone)]
pub struct ProcessResult {
    pub status: ProcessStatus,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

/// Runs `cmd` through `sh -c` in its own process group. On timeout the
/// whole group is killed, so grandchildren cannot keep the pipes open.
pub fn run_shell(
    cmd: &str,
    cwd: &Path,
    env_vars: &BTreeMap<String, String>,
    stdin: Option<&[u8]>,
    timeout: Duration,
) -> ProcessResult {
    let mut command = Command::new("sh");
    command
        .arg("-c")
        .arg(cmd)
        .current_dir(cwd)
        .envs(env_vars)
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);

    let mut child = match command.spawn() {
        Ok(c) => c,
        Err(e) => {
            return ProcessResult {
                status: ProcessStatus::SpawnFailed(e.to_string()),
                stdout: Vec::new(),
                stderr: Vec::new(),
            }
        }
    };

    let writer = stdin.map(|bytes| {
        let mut pipe = child.stdin.take().expect("stdin piped");
        let bytes = bytes.to_vec();
        // A child that exits without reading its input yields EPIPE; ignore it.
        thread::spawn(move || {
            let _ = pipe.write_all(&bytes);
        })
    });
    let drain = |mut r: Box<dyn Read + Send>| {
        thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = r.read_to_end(&mut buf);
            buf
        })
    };
    let out = drain(Box::new(child.stdout.take().expect("stdout piped")));
    let err = drain(Box::new(child.stderr.take().expect("stderr piped")));

    let start = Instant::now();
    let mut nap = Duration::from_millis(1);
    let status = loop {
        match child.try_wait() {
            Ok(Some(st)) => {
                break match (st.code(), st.signal()) {
                    (Some(code), _) => ProcessStatus::Exited(code),
                    (None, Some(sig)) => ProcessStatus::Signaled(sig),
                    (None, None) => ProcessStatus::Signaled(0),
                }
            }
            Ok(None) if start.elapsed() >= timeout => {
                // SAFETY: kill(2) with a negative pid targets the process group
                // we created for this child; no memory is touched.
                unsafe {
                    libc::kill(-(child.id() as i32), libc::SIGKILL);
                }
                let _ = child.wait();
                break ProcessStatus::TimedOut;
            }
            Ok(None) => {
                thread::sleep(nap);
                nap = (nap * 2).min(Duration::from_millis(20));
            }
            Err(e) => break ProcessStatus::SpawnFailed(e.to_string()),
        }
    };
    // Stray background processes may still hold the pipes; take the group down.
    // SAFETY: as above.
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
    if let Some(w) = writer {
        let _ = w.join();
    }
    ProcessResult { status, stdout: out.join().unwrap_or_default(), stderr: err.join().unwrap_or_default() }
}
