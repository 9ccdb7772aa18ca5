//! Test child for the exec provider.
//!
//! ```text
//! protocol_stub fixed             SEG -> fixed 4x4 mask, DEPTH -> 4x4 ramp
//! protocol_stub labelmap <dir>    serves an emitted dataset directory
//! protocol_stub truncate          announces a payload, sends half, exits
//! protocol_stub wrong-id          answers with the wrong request id
//! protocol_stub garbage           answers with an unframed line
//! protocol_stub error             every request gets an ERR reply
//! protocol_stub slow <ms>         fixed, after sleeping <ms> per request
//! protocol_stub exit-after <n>    fixed, exits after <n> replies
//! ```
//!
//! Unknown verbs get `ERR <id> unknown-verb` in every mode.

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use gazeprompt::dataset::{depth_file, labels_file};
use gazeprompt::raster::{
    connected_component, read_pgm, write_pfm, write_pgm, Connectivity, DepthMap, LabelMap, Mask, Pixel,
};

enum Mode {
    Fixed,
    LabelMap(PathBuf),
    Truncate,
    WrongId,
    Garbage,
    Error,
    Slow(Duration),
    ExitAfter(usize),
}

fn parse_mode(args: &[String]) -> Option<Mode> {
    let arg = |i: usize| args.get(i).map(String::as_str);
    Some(match arg(1)? {
        "fixed" => Mode::Fixed,
        "labelmap" => Mode::LabelMap(PathBuf::from(arg(2)?)),
        "truncate" => Mode::Truncate,
        "wrong-id" => Mode::WrongId,
        "garbage" => Mode::Garbage,
        "error" => Mode::Error,
        "slow" => Mode::Slow(Duration::from_millis(arg(2)?.parse().ok()?)),
        "exit-after" => Mode::ExitAfter(arg(2)?.parse().ok()?),
        _ => return None,
    })
}

fn fixed_mask() -> Mask {
    Mask::from_fn(4, 4, |x, y| (1..3).contains(&x) && y < 3).expect("non-empty")
}

fn fixed_depth() -> DepthMap {
    DepthMap::from_fn(4, 4, |x, y| (x + 4 * y) as f32).expect("non-empty")
}

enum Request<'a> {
    Seg { id: u64, path: &'a str, x: i64, y: i64 },
    Depth { id: u64, path: &'a str },
    Unknown { id: u64 },
}

fn parse_request(line: &str) -> Option<Request<'_>> {
    let mut parts = line.split(' ');
    let verb = parts.next()?;
    let id = parts.next()?.parse().ok()?;
    let rest: Vec<&str> = parts.collect();
    Some(match (verb, rest.as_slice()) {
        ("SEG", [path, x, y]) => Request::Seg {
            id,
            path,
            x: x.parse().ok()?,
            y: y.parse().ok()?,
        },
        ("DEPTH", [path]) => Request::Depth { id, path },
        _ => Request::Unknown { id },
    })
}

/// Frame index encoded in a `frame_%06d.pgm` path.
fn frame_index(path: &str) -> Option<usize> {
    let name = Path::new(path).file_name()?.to_str()?;
    name.strip_prefix("frame_")?.strip_suffix(".pgm")?.parse().ok()
}

fn serve_labelmap(dir: &Path, req: &Request) -> Result<Vec<u8>, String> {
    match *req {
        Request::Seg { path, x, y, .. } => {
            let t = frame_index(path).ok_or("bad-frame-path")?;
            let bytes = std::fs::read(dir.join(labels_file(t))).map_err(|_| "no-such-frame")?;
            let labels: LabelMap = read_pgm(&bytes).map_err(|e| e.to_string())?;
            let (w, h) = labels.dims();
            if x < 0 || y < 0 || x as usize >= w || y as usize >= h {
                return Err("out-of-bounds".into());
            }
            let mask = connected_component(&labels, Pixel::new(x as usize, y as usize), Connectivity::Four)
                .map_err(|e| e.to_string())?;
            Ok(write_pgm(&mask))
        }
        Request::Depth { path, .. } => {
            let t = frame_index(path).ok_or("bad-frame-path")?;
            std::fs::read(dir.join(depth_file(t))).map_err(|_| "no-such-frame".into())
        }
        Request::Unknown { .. } => Err("unknown-verb".into()),
    }
}

fn payload(mode: &Mode, req: &Request) -> Result<Vec<u8>, String> {
    match (mode, req) {
        (_, Request::Unknown { .. }) => Err("unknown-verb".into()),
        (Mode::LabelMap(dir), _) => serve_labelmap(dir, req),
        (Mode::Error, _) => Err("provider-failure".into()),
        (_, Request::Seg { .. }) => Ok(write_pgm(&fixed_mask())),
        (_, Request::Depth { .. }) => Ok(write_pfm(&fixed_depth())),
    }
}

fn request_id(req: &Request) -> u64 {
    match *req {
        Request::Seg { id, .. } | Request::Depth { id, .. } | Request::Unknown { id } => id,
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let Some(mode) = parse_mode(&args) else {
        eprintln!("usage: protocol_stub fixed|labelmap <dir>|truncate|wrong-id|garbage|error|slow <ms>|exit-after <n>");
        return ExitCode::from(2);
    };
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut served = 0usize;
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let Some(req) = parse_request(&line) else {
            let _ = writeln!(out, "ERR 0 bad-request");
            let _ = out.flush();
            continue;
        };
        let id = request_id(&req);
        let reply = payload(&mode, &req);
        let written = match (&mode, reply) {
            (Mode::Garbage, _) => writeln!(out, "HELLO {id}"),
            (_, Err(msg)) => writeln!(out, "ERR {id} {msg}"),
            (Mode::Truncate, Ok(bytes)) => {
                let _ = writeln!(out, "OK {id} {}", bytes.len());
                let _ = out.write_all(&bytes[..bytes.len() / 2]);
                let _ = out.flush();
                return ExitCode::SUCCESS;
            }
            (Mode::WrongId, Ok(bytes)) => writeln!(out, "OK {} {}", id + 1, bytes.len()).and_then(|_| out.write_all(&bytes)),
            (Mode::Slow(delay), Ok(bytes)) => {
                std::thread::sleep(*delay);
                writeln!(out, "OK {id} {}", bytes.len()).and_then(|_| out.write_all(&bytes))
            }
            (_, Ok(bytes)) => writeln!(out, "OK {id} {}", bytes.len()).and_then(|_| out.write_all(&bytes)),
        };
        if written.and_then(|_| out.flush()).is_err() {
            break;
        }
        served += 1;
        if matches!(mode, Mode::ExitAfter(n) if served >= n) {
            break;
        }
    }
    ExitCode::SUCCESS
}
