//! Client for an out-of-process denoiser speaking a binary stdio protocol.
//!
//! Little-endian throughout. A request is the magic `VPD1`, `u32` width,
//! height and channels, an `f32` noise level on the `[0, 1]` scale, then
//! `width·height·channels` `f32` samples in planar row-major order. A response
//! is the magic `VPR1` and a `u32` status; status 0 is followed by a raster in
//! the same layout minus the noise level (`u32` dims then `f32` samples), any
//! other status by a `u32` byte length and a UTF-8 message. Requests and
//! responses strictly alternate.
//!
//! Samples cross the boundary in single precision.

use std::io::{BufReader, BufWriter, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use thiserror::Error;

use super::{check_sigma, DenoiseError, Denoiser};
use crate::raster::{Dims, Raster};

pub const REQUEST_MAGIC: &[u8; 4] = b"VPD1";
pub const RESPONSE_MAGIC: &[u8; 4] = b"VPR1";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("bridge server unavailable: {0}")]
    Unavailable(String),
    #[error("bridge protocol violation: {0}")]
    Protocol(String),
    #[error("bridge returned {got}, expected {expected}")]
    ShapeMismatch { got: Dims, expected: Dims },
    #[error("bridge server error (status {status}): {message}")]
    Server { status: u32, message: String },
    #[error("no response from bridge within {0:?}")]
    Timeout(Duration),
}

/// A decoded response frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Ok(Raster),
    Error { status: u32, message: String },
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32(r: &mut impl Read) -> std::io::Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn encode_raster_body(x: &Raster, out: &mut Vec<u8>) {
    for v in x.as_slice() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

fn decode_raster_body(r: &mut impl Read, dims: Dims) -> std::io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; dims.len() * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
        .collect())
}

fn read_dims(r: &mut impl Read) -> std::io::Result<Dims> {
    Ok(Dims::new(read_u32(r)? as usize, read_u32(r)? as usize, read_u32(r)? as usize))
}

fn write_dims(d: Dims, out: &mut Vec<u8>) {
    for v in [d.width, d.height, d.channels] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
}

pub fn encode_request(x: &Raster, sigma_d: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + x.len() * 4);
    out.extend_from_slice(REQUEST_MAGIC);
    write_dims(x.dims(), &mut out);
    out.extend_from_slice(&(sigma_d as f32).to_le_bytes());
    encode_raster_body(x, &mut out);
    out
}

/// Server side: reads one request. `Ok(None)` on a clean end of stream.
pub fn decode_request(r: &mut impl Read) -> Result<Option<(Raster, f32)>, BridgeError> {
    let mut magic = [0u8; 4];
    match r.read_exact(&mut magic) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(BridgeError::Unavailable(e.to_string())),
    }
    if &magic != REQUEST_MAGIC {
        return Err(BridgeError::Protocol(format!("bad request magic {magic:?}")));
    }
    let io = |e: std::io::Error| BridgeError::Protocol(format!("truncated request: {e}"));
    let dims = read_dims(r).map_err(io)?;
    let sigma = read_f32(r).map_err(io)?;
    let data = decode_raster_body(r, dims).map_err(io)?;
    let raster = Raster::from_vec(dims, data).map_err(|e| BridgeError::Protocol(e.to_string()))?;
    Ok(Some((raster, sigma)))
}

pub fn encode_response(response: &Response) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(RESPONSE_MAGIC);
    match response {
        Response::Ok(x) => {
            out.extend_from_slice(&0u32.to_le_bytes());
            write_dims(x.dims(), &mut out);
            encode_raster_body(x, &mut out);
        }
        Response::Error { status, message } => {
            out.extend_from_slice(&status.to_le_bytes());
            out.extend_from_slice(&(message.len() as u32).to_le_bytes());
            out.extend_from_slice(message.as_bytes());
        }
    }
    out
}

pub fn decode_response(r: &mut impl Read) -> Result<Response, BridgeError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| BridgeError::Unavailable(format!("reading response: {e}")))?;
    if &magic != RESPONSE_MAGIC {
        return Err(BridgeError::Protocol(format!("bad response magic {magic:?}")));
    }
    let io = |e: std::io::Error| BridgeError::Protocol(format!("truncated response: {e}"));
    let status = read_u32(r).map_err(io)?;
    if status == 0 {
        let dims = read_dims(r).map_err(io)?;
        let data = decode_raster_body(r, dims).map_err(io)?;
        let raster = Raster::from_vec(dims, data).map_err(|e| BridgeError::Protocol(e.to_string()))?;
        Ok(Response::Ok(raster))
    } else {
        let len = read_u32(r).map_err(io)? as usize;
        let mut msg = vec![0u8; len];
        r.read_exact(&mut msg).map_err(io)?;
        let message = String::from_utf8(msg).map_err(|e| BridgeError::Protocol(e.to_string()))?;
        Ok(Response::Error { status, message })
    }
}

/// Minimal request loop: answers each request with `model(x, σ_d)`.
///
/// Malformed magic gets a status-1 reply and ends the loop, since framing
/// cannot be recovered. Returns when the input closes.
pub fn serve(
    input: &mut impl Read,
    output: &mut impl Write,
    mut model: impl FnMut(&Raster, f64) -> Result<Raster, String>,
) -> std::io::Result<()> {
    loop {
        let response = match decode_request(input) {
            Ok(None) => return Ok(()),
            Ok(Some((x, sigma))) => match model(&x, sigma as f64) {
                Ok(out) => Response::Ok(out),
                Err(message) => Response::Error { status: 2, message },
            },
            Err(e) => {
                output.write_all(&encode_response(&Response::Error { status: 1, message: e.to_string() }))?;
                output.flush()?;
                return Ok(());
            }
        };
        output.write_all(&encode_response(&response))?;
        output.flush()?;
    }
}

/// FIFO admission: callers are served in the order they arrived.
struct TicketGate {
    state: Mutex<(u64, u64)>,
    turn: Condvar,
}

impl TicketGate {
    fn new() -> Self {
        Self { state: Mutex::new((0, 0)), turn: Condvar::new() }
    }

    fn enter(&self) -> u64 {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let ticket = s.0;
        s.0 += 1;
        while s.1 != ticket {
            s = self.turn.wait(s).unwrap_or_else(|e| e.into_inner());
        }
        ticket
    }

    fn leave(&self) {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        s.1 += 1;
        self.turn.notify_all();
    }
}

struct Connection {
    writer: Box<dyn Write + Send>,
    responses: Receiver<Result<Response, BridgeError>>,
    broken: Option<String>,
}

/// Denoiser backed by a bridge server. One request in flight at a time;
/// concurrent callers queue in FIFO order.
pub struct BridgeDenoiser {
    conn: Mutex<Connection>,
    gate: TicketGate,
    timeout: Duration,
    child: Mutex<Option<Child>>,
}

impl BridgeDenoiser {
    /// Wraps an already connected transport.
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        timeout: Duration,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(reader);
            loop {
                let frame = decode_response(&mut reader);
                let stop = frame.is_err();
                if tx.send(frame).is_err() || stop {
                    return;
                }
            }
        });
        Self {
            conn: Mutex::new(Connection { writer: Box::new(BufWriter::new(writer)), responses: rx, broken: None }),
            gate: TicketGate::new(),
            timeout,
            child: Mutex::new(None),
        }
    }

    /// Starts `command` through `sh -c` with piped stdin/stdout.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, BridgeError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BridgeError::Unavailable(format!("cannot start {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let bridge = Self::from_streams(stdout, stdin, timeout);
        *bridge.child.lock().unwrap_or_else(|e| e.into_inner()) = Some(child);
        Ok(bridge)
    }

    /// Sends one request and waits for its response.
    pub fn request(&self, x: &Raster, sigma_d: f64) -> Result<Raster, BridgeError> {
        self.gate.enter();
        let result = self.request_locked(x, sigma_d);
        self.gate.leave();
        result
    }

    fn request_locked(&self, x: &Raster, sigma_d: f64) -> Result<Raster, BridgeError> {
        let mut conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(reason) = &conn.broken {
            return Err(BridgeError::Unavailable(reason.clone()));
        }
        let payload = encode_request(x, sigma_d);
        let sent = conn.writer.write_all(&payload).and_then(|_| conn.writer.flush());
        if let Err(e) = sent {
            conn.broken = Some(format!("write failed: {e}"));
            return Err(BridgeError::Unavailable(format!("write failed: {e}")));
        }
        let frame = match conn.responses.recv_timeout(self.timeout) {
            Ok(frame) => frame,
            Err(RecvTimeoutError::Timeout) => {
                // a late reply would break request/response alternation
                conn.broken = Some("previous request timed out".into());
                return Err(BridgeError::Timeout(self.timeout));
            }
            Err(RecvTimeoutError::Disconnected) => {
                conn.broken = Some("server closed the connection".into());
                return Err(BridgeError::Unavailable("server closed the connection".into()));
            }
        };
        let response = frame.inspect_err(|e| conn.broken = Some(e.to_string()))?;
        match response {
            Response::Ok(out) if out.dims() == x.dims() => Ok(out),
            Response::Ok(out) => Err(BridgeError::ShapeMismatch { got: out.dims(), expected: x.dims() }),
            Response::Error { status, message } => Err(BridgeError::Server { status, message }),
        }
    }
}

impl Drop for BridgeDenoiser {
    fn drop(&mut self) {
        // closing stdin lets a well-behaved server exit on its own
        if let Ok(conn) = self.conn.get_mut() {
            conn.writer = Box::new(std::io::sink());
        }
        if let Some(mut child) = self.child.get_mut().ok().and_then(Option::take) {
            let deadline = std::time::Instant::now() + Duration::from_secs(2);
            while std::time::Instant::now() < deadline {
                if let Ok(Some(_)) = child.try_wait() {
                    return;
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Denoiser for BridgeDenoiser {
    fn name(&self) -> &str {
        "bridge"
    }

    fn denoise(&self, x: &Raster, sigma_d: f64) -> Result<Raster, DenoiseError> {
        check_sigma(sigma_d)?;
        Ok(self.request(x, sigma_d)?)
    }

    fn exact_prox(&self) -> bool {
        false
    }
}
