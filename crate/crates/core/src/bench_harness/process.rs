//! Child processes in their own process group, with a hard wall-clock
//! limit and an optional address-space limit.

use std::io::{self, Read};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

/// Captured output is truncated to its last this-many bytes.
const OUTPUT_CAP: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Exited(i32),
    Signaled(i32),
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct ChildRun {
    pub termination: Termination,
    pub stdout: String,
    pub stderr: String,
    pub wall_time_s: f64,
    /// Peak resident set size of the child in KiB, from `wait4`.
    pub peak_rss_kb: Option<u64>,
}

fn read_capped(mut r: impl Read + Send + 'static) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 8192];
        loop {
            match r.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    buf.extend_from_slice(&chunk[..n]);
                    if buf.len() > 2 * OUTPUT_CAP {
                        buf.drain(..buf.len() - OUTPUT_CAP);
                    }
                }
            }
        }
        if buf.len() > OUTPUT_CAP {
            buf.drain(..buf.len() - OUTPUT_CAP);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

fn decode(status: libc::c_int) -> Termination {
    if libc::WIFEXITED(status) {
        Termination::Exited(libc::WEXITSTATUS(status))
    } else {
        Termination::Signaled(libc::WTERMSIG(status))
    }
}

/// Runs `argv` in `dir`. The whole process group is killed with SIGKILL
/// once `timeout_s` elapses, and again after the leader exits so that
/// stray grandchildren cannot hold the output pipes open.
pub fn run_child(argv: &[String], dir: &Path, timeout_s: f64, mem_limit_mb: Option<u64>) -> io::Result<ChildRun> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mem_bytes = mem_limit_mb.map(|mb| mb.saturating_mul(1 << 20) as libc::rlim_t);
    // SAFETY: only async-signal-safe libc calls run between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            if libc::setpgid(0, 0) != 0 {
                return Err(io::Error::last_os_error());
            }
            if let Some(bytes) = mem_bytes {
                let lim = libc::rlimit {
                    rlim_cur: bytes,
                    rlim_max: bytes,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(io::Error::last_os_error());
                }
            }
            Ok(())
        });
    }
    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let pid = child.id() as libc::pid_t;
    let out = read_capped(child.stdout.take().expect("piped stdout"));
    let err = read_capped(child.stderr.take().expect("piped stderr"));
    let limit = Duration::from_secs_f64(timeout_s.max(0.0));
    let mut nap = Duration::from_micros(200);
    let (termination, rusage) = loop {
        let mut status: libc::c_int = 0;
        // SAFETY: rusage is plain data; wait4 fills it in.
        let mut ru: libc::rusage = unsafe { std::mem::zeroed() };
        let r = unsafe { libc::wait4(pid, &mut status, libc::WNOHANG, &mut ru) };
        if r == pid {
            break (decode(status), Some(ru));
        }
        if r < 0 {
            let e = io::Error::last_os_error();
            if e.kind() == io::ErrorKind::Interrupted {
                continue;
            }
            return Err(e);
        }
        if start.elapsed() >= limit {
            unsafe {
                libc::killpg(pid, libc::SIGKILL);
                let mut status = 0;
                while libc::wait4(pid, &mut status, 0, &mut ru) < 0
                    && io::Error::last_os_error().kind() == io::ErrorKind::Interrupted
                {}
            }
            break (Termination::TimedOut, Some(ru));
        }
        let left = limit.saturating_sub(start.elapsed());
        thread::sleep(nap.min(left).max(Duration::from_micros(50)));
        nap = (nap * 2).min(Duration::from_millis(5));
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    unsafe {
        libc::killpg(pid, libc::SIGKILL);
    }
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    Ok(ChildRun {
        termination,
        stdout,
        stderr,
        wall_time_s,
        peak_rss_kb: rusage.map(|ru| ru.ru_maxrss.max(0) as u64),
    })
}
