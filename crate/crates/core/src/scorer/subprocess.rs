use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::{Duration, Instant};

use super::protocol::{Reply, Request};
use super::{check_probability, Scorer, ScorerError, Window};

/// Scores windows by talking to a child process over stdin/stdout.
///
/// The child is started with `sh -c <command>` and owned exclusively by this
/// scorer; it is terminated on drop.
pub struct SubprocessScorer {
    command: String,
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
    pending: HashMap<u64, f64>,
    send_frames: bool,
}

impl SubprocessScorer {
    /// Spawns the backend. With `send_frames = false` requests carry only
    /// clip id and frame index, for backends that replay stored scores.
    pub fn spawn(command: &str, send_frames: bool) -> Result<Self, ScorerError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ScorerError::Backend(format!("spawn `{command}`: {e}")))?;
        let stdin = child.stdin.take().map(BufWriter::new);
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(SubprocessScorer {
            command: command.to_string(),
            child,
            stdin,
            stdout,
            next_id: 0,
            pending: HashMap::new(),
            send_frames,
        })
    }

    fn exit_diagnostic(&mut self) -> String {
        match self.child.try_wait() {
            Ok(Some(status)) => format!("backend `{}` exited ({status})", self.command),
            _ => format!("backend `{}` closed its output", self.command),
        }
    }

    fn send(&mut self, window: &Window) -> Result<u64, ScorerError> {
        let id = self.next_id;
        self.next_id += 1;
        let req = Request::for_window(id, window, self.send_frames);
        let stdin = self.stdin.as_mut().ok_or_else(|| ScorerError::Backend("backend stdin closed".into()))?;
        let res = serde_json::to_writer(&mut *stdin, &req)
            .map_err(std::io::Error::from)
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush());
        if let Err(e) = res {
            let diag = self.exit_diagnostic();
            return Err(ScorerError::Backend(format!("{diag}: write failed: {e}")));
        }
        Ok(id)
    }

    fn receive(&mut self, id: u64) -> Result<f64, ScorerError> {
        loop {
            if let Some(score) = self.pending.remove(&id) {
                return Ok(score);
            }
            let mut line = String::new();
            let n = self
                .stdout
                .read_line(&mut line)
                .map_err(|e| ScorerError::Backend(format!("read from backend: {e}")))?;
            if n == 0 {
                // give the child a moment to be reaped so the status is reported
                let deadline = Instant::now() + Duration::from_millis(200);
                while Instant::now() < deadline && matches!(self.child.try_wait(), Ok(None)) {
                    std::thread::sleep(Duration::from_millis(5));
                }
                return Err(ScorerError::Backend(self.exit_diagnostic()));
            }
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let reply: Reply =
                serde_json::from_str(line).map_err(|e| ScorerError::Protocol(format!("malformed reply `{line}`: {e}")))?;
            if let Some(err) = reply.error {
                return Err(ScorerError::Backend(format!("request {}: {err}", reply.id)));
            }
            let score = reply
                .score
                .ok_or_else(|| ScorerError::Protocol(format!("reply {} has neither score nor error", reply.id)))?;
            if reply.id >= self.next_id || self.pending.contains_key(&reply.id) {
                return Err(ScorerError::Protocol(format!("reply for unknown or repeated id {}", reply.id)));
            }
            self.pending.insert(reply.id, check_probability(score)?);
        }
    }
}

impl Scorer for SubprocessScorer {
    fn name(&self) -> String {
        format!("subprocess({})", self.command)
    }

    fn score(&mut self, window: &Window) -> Result<f64, ScorerError> {
        let id = self.send(window)?;
        self.receive(id)
    }

    fn score_many(&mut self, windows: &[Window]) -> Result<Vec<f64>, ScorerError> {
        let ids = windows.iter().map(|w| self.send(w)).collect::<Result<Vec<_>, _>>()?;
        ids.into_iter().map(|id| self.receive(id)).collect()
    }
}

impl Drop for SubprocessScorer {
    fn drop(&mut self) {
        // closing stdin lets well-behaved backends exit on their own
        self.stdin.take();
        let deadline = Instant::now() + Duration::from_millis(500);
        while Instant::now() < deadline {
            if !matches!(self.child.try_wait(), Ok(None)) {
                return;
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
