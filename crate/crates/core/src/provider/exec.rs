//! External-process backend speaking a line-oriented request protocol.
//!
//! Requests go to the child's stdin, one per line:
//!
//! ```text
//! SEG <id> <frame_path> <x> <y>
//! DEPTH <id> <frame_path>
//! ```
//!
//! `x` and `y` are the prompt rounded half-up to integer pixels. The child
//! answers each request on stdout with either
//!
//! ```text
//! OK <id> <byte_len>\n<byte_len bytes: P5 PGM mask or Pf PFM depth>
//! ERR <id> <message>\n
//! ```
//!
//! Request ids start at 1 and increase by one per request. Requests are
//! strictly serialized: a new one is only sent after the previous answer.
//! After a timeout or a framing error the child is killed and a fresh one is
//! spawned on the next request.

use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::dataset;
use crate::geometry::PixelPoint;
use crate::raster::{read_pfm, read_pgm, DepthMap, Mask};

use super::{Capabilities, DepthProvider, FrameRef, ProviderError, SegmentationProvider};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Upper bound on a response payload, far above any realistic frame.
const MAX_PAYLOAD: usize = 1 << 30;

/// One framed answer from the child.
#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Ok { id: u64, payload: Vec<u8> },
    Err { id: u64, message: String },
}

impl Reply {
    pub fn id(&self) -> u64 {
        match self {
            Reply::Ok { id, .. } | Reply::Err { id, .. } => *id,
        }
    }
}

/// Reads one reply. `Ok(None)` means the stream ended cleanly between
/// replies.
pub fn read_reply<R: BufRead>(reader: &mut R) -> Result<Option<Reply>, ProviderError> {
    let mut line = Vec::new();
    let n = reader
        .read_until(b'\n', &mut line)
        .map_err(|e| ProviderError::ChildExited(e.to_string()))?;
    if n == 0 {
        return Ok(None);
    }
    if line.pop() != Some(b'\n') {
        return Err(ProviderError::Truncated);
    }
    let line = String::from_utf8(line)
        .map_err(|_| ProviderError::Malformed("response header is not UTF-8".into()))?;
    let malformed = || ProviderError::Malformed(format!("bad response header `{line}`"));
    let (verb, rest) = line.split_once(' ').ok_or_else(malformed)?;
    match verb {
        "OK" => {
            let mut parts = rest.split(' ');
            let id = parts.next().and_then(|s| s.parse().ok()).ok_or_else(malformed)?;
            let len: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(malformed)?;
            if parts.next().is_some() || len > MAX_PAYLOAD {
                return Err(malformed());
            }
            let mut payload = vec![0; len];
            reader.read_exact(&mut payload).map_err(|e| match e.kind() {
                ErrorKind::UnexpectedEof => ProviderError::Truncated,
                _ => ProviderError::ChildExited(e.to_string()),
            })?;
            Ok(Some(Reply::Ok { id, payload }))
        }
        "ERR" => {
            let (id, message) = rest.split_once(' ').unwrap_or((rest, ""));
            let id = id.parse().map_err(|_| malformed())?;
            Ok(Some(Reply::Err {
                id,
                message: message.to_string(),
            }))
        }
        _ => Err(malformed()),
    }
}

pub fn seg_request(id: u64, frame_path: &str, x: i64, y: i64) -> String {
    format!("SEG {id} {frame_path} {x} {y}\n")
}

pub fn depth_request(id: u64, frame_path: &str) -> String {
    format!("DEPTH {id} {frame_path}\n")
}

type ReaderMessage = Result<Reply, ProviderError>;

struct Connection {
    child: Child,
    stdin: ChildStdin,
    replies: Receiver<ReaderMessage>,
}

impl Connection {
    fn spawn(cmd: &str) -> Result<Self, ProviderError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ProviderError::Spawn(format!("`{cmd}`: {e}")))?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, replies) = mpsc::channel();
        // detached: it ends once every holder of the pipe is gone
        std::thread::spawn(move || {
            let mut stdout = BufReader::new(stdout);
            loop {
                match read_reply(&mut stdout) {
                    Ok(Some(reply)) => {
                        if tx.send(Ok(reply)).is_err() {
                            return;
                        }
                    }
                    Ok(None) => return,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            replies,
        })
    }

    fn exit_reason(&mut self) -> String {
        match self.child.try_wait() {
            Ok(Some(status)) => status.to_string(),
            _ => "output stream closed".into(),
        }
    }

    fn round_trip(&mut self, id: u64, request: &str, timeout: Duration) -> Result<Reply, ProviderError> {
        if let Err(e) = self
            .stdin
            .write_all(request.as_bytes())
            .and_then(|_| self.stdin.flush())
        {
            return Err(ProviderError::ChildExited(format!("writing request: {e}")));
        }
        let reply = match self.replies.recv_timeout(timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(e),
            Err(RecvTimeoutError::Timeout) => return Err(ProviderError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                // give the child a moment to be reaped so the status is known
                std::thread::sleep(Duration::from_millis(10));
                return Err(ProviderError::ChildExited(self.exit_reason()));
            }
        };
        if reply.id() != id {
            return Err(ProviderError::Malformed(format!(
                "expected reply to request {id}, got {}",
                reply.id()
            )));
        }
        Ok(reply)
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Segmentation and depth served by a child process.
pub struct ExecProvider {
    cmd: String,
    timeout: Duration,
    frames_dir: PathBuf,
    next_id: u64,
    conn: Option<Connection>,
}

impl ExecProvider {
    /// Starts `sh -c cmd`. Frame paths sent to the child are
    /// `frames_dir/frame_%06d.pgm`.
    pub fn spawn(cmd: &str, timeout: Duration, frames_dir: &Path) -> Result<Self, ProviderError> {
        let frames_dir = frames_dir.to_path_buf();
        let dir = frames_dir.display().to_string();
        if dir.chars().any(char::is_whitespace) {
            return Err(ProviderError::Unsupported(format!(
                "frame directory `{dir}` contains whitespace, which the request line cannot carry"
            )));
        }
        Ok(Self {
            cmd: cmd.to_string(),
            timeout,
            frames_dir,
            next_id: 1,
            conn: Some(Connection::spawn(cmd)?),
        })
    }

    /// Wraps the provider so one child can serve both roles.
    pub fn shared(self) -> SharedExec {
        SharedExec(Arc::new(Mutex::new(self)))
    }

    /// Id the next request will carry.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn child_id(&self) -> Option<u32> {
        self.conn.as_ref().map(|c| c.child.id())
    }

    fn frame_path(&self, frame: &FrameRef) -> String {
        self.frames_dir
            .join(dataset::frame_file(frame.frame_index))
            .display()
            .to_string()
    }

    fn request(&mut self, build: impl FnOnce(u64) -> String) -> Result<Vec<u8>, ProviderError> {
        if self.conn.is_none() {
            self.conn = Some(Connection::spawn(&self.cmd)?);
        }
        let id = self.next_id;
        self.next_id += 1;
        let conn = self.conn.as_mut().expect("connected above");
        match conn.round_trip(id, &build(id), self.timeout) {
            Ok(Reply::Ok { payload, .. }) => Ok(payload),
            Ok(Reply::Err { id, message }) => Err(ProviderError::Remote { id, message }),
            Err(e) => {
                // the stream may be out of sync; start over on the next call
                self.conn = None;
                Err(e)
            }
        }
    }

    fn decode_err(source: crate::raster::CodecError) -> ProviderError {
        ProviderError::Codec {
            path: "exec response".into(),
            source,
        }
    }
}

impl SegmentationProvider for ExecProvider {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            name: "exec",
            deterministic: false,
            concurrent_safe: false,
        }
    }

    fn segment(&mut self, frame: &FrameRef, prompt: PixelPoint) -> Result<Mask, ProviderError> {
        let pixel = frame.prompt_pixel(prompt)?;
        let path = self.frame_path(frame);
        let payload = self.request(|id| seg_request(id, &path, pixel.x as i64, pixel.y as i64))?;
        read_pgm(&payload).map_err(Self::decode_err)
    }
}

impl DepthProvider for ExecProvider {
    fn capabilities(&self) -> Capabilities {
        SegmentationProvider::capabilities(self)
    }

    fn depth(&mut self, frame: &FrameRef) -> Result<DepthMap, ProviderError> {
        let path = self.frame_path(frame);
        let payload = self.request(|id| depth_request(id, &path))?;
        read_pfm(&payload).map_err(Self::decode_err)
    }
}

/// An [`ExecProvider`] usable as both segmenter and depth source.
#[derive(Clone)]
pub struct SharedExec(Arc<Mutex<ExecProvider>>);

impl SharedExec {
    fn lock(&self) -> std::sync::MutexGuard<'_, ExecProvider> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl SegmentationProvider for SharedExec {
    fn capabilities(&self) -> Capabilities {
        SegmentationProvider::capabilities(&*self.lock())
    }

    fn segment(&mut self, frame: &FrameRef, prompt: PixelPoint) -> Result<Mask, ProviderError> {
        self.lock().segment(frame, prompt)
    }
}

impl DepthProvider for SharedExec {
    fn capabilities(&self) -> Capabilities {
        DepthProvider::capabilities(&*self.lock())
    }

    fn depth(&mut self, frame: &FrameRef) -> Result<DepthMap, ProviderError> {
        self.lock().depth(frame)
    }
}
