//! Shell command execution with a timeout.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::Duration;

use wait_timeout::ChildExt;

#[derive(Debug)]
pub(crate) enum RunError {
    Spawn(std::io::Error),
    TimedOut { stderr: String },
    Failed { code: Option<i32>, stderr: String },
}

impl RunError {
    pub(crate) fn message(&self) -> String {
        match self {
            RunError::Spawn(e) => format!("could not start command: {e}"),
            RunError::TimedOut { .. } => "command timed out".into(),
            RunError::Failed { code: Some(c), .. } => format!("command exited with status {c}"),
            RunError::Failed { code: None, .. } => "command killed by a signal".into(),
        }
    }

    pub(crate) fn stderr(&self) -> String {
        match self {
            RunError::Spawn(_) => String::new(),
            RunError::TimedOut { stderr } | RunError::Failed { stderr, .. } => stderr.clone(),
        }
    }
}

/// Run `sh -c command`, feed `stdin`, and return stdout on success.
pub(crate) fn run_shell(
    command: &str,
    stdin: &[u8],
    timeout: Duration,
) -> Result<Vec<u8>, RunError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()
        .map_err(RunError::Spawn)?;

    let mut out_pipe = child.stdout.take().expect("piped");
    let mut err_pipe = child.stderr.take().expect("piped");
    let out_thread = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out_pipe.read_to_end(&mut buf);
        buf
    });
    let err_thread = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err_pipe.read_to_end(&mut buf);
        buf
    });
    if let Some(mut pipe) = child.stdin.take() {
        // a child that ignores stdin may close it early
        let _ = pipe.write_all(stdin);
    }

    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) => {
            kill_group(&mut child);
            let stderr = String::from_utf8_lossy(&err_thread.join().unwrap_or_default()).into();
            return Err(RunError::TimedOut { stderr });
        }
        Err(e) => return Err(RunError::Spawn(e)),
    };
    let stdout = out_thread.join().unwrap_or_default();
    let stderr = String::from_utf8_lossy(&err_thread.join().unwrap_or_default()).into_owned();
    if !status.success() {
        return Err(RunError::Failed {
            code: status.code(),
            stderr,
        });
    }
    Ok(stdout)
}

/// Kill the shell and anything it spawned so the pipes close.
fn kill_group(child: &mut Child) {
    // SAFETY: plain syscall on the process group created at spawn
    unsafe {
        libc::kill(-(child.id() as i32), libc::SIGKILL);
    }
    let _ = child.wait();
}
