//! Client for predictors running in another process.
//!
//! A reader thread turns the incoming byte stream into frames and forwards
//! them over a channel, so waits can time out. Requests may be pipelined;
//! responses are matched to requests by id.

use std::collections::HashMap;
use std::io::{BufReader, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::protocol::{self, Response};
use super::{fallback_grid, grid_from_prediction, PredictedMap, PredictionRequest, Predictor};
use crate::grid::GridGeometry;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Transport {
    /// Spawn `command` and talk over its stdin/stdout.
    Stdio {
        command: String,
        #[serde(default)]
        args: Vec<String>,
    },
    Tcp {
        address: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    pub transport: Transport,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    30.0
}

impl ExternalConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }
}

enum Incoming {
    Hello(u16),
    Frame(Vec<u8>),
    Closed(String),
}

fn spawn_reader(mut reader: impl Read + Send + 'static) -> Receiver<Incoming> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        match protocol::read_hello(&mut reader) {
            Ok(v) => {
                if tx.send(Incoming::Hello(v)).is_err() {
                    return;
                }
            }
            Err(e) => {
                let _ = tx.send(Incoming::Closed(e.to_string()));
                return;
            }
        }
        loop {
            let msg = match protocol::read_frame(&mut reader) {
                Ok(Some(f)) => Incoming::Frame(f),
                Ok(None) => Incoming::Closed("end of stream".into()),
                Err(e) => Incoming::Closed(e.to_string()),
            };
            let stop = matches!(msg, Incoming::Closed(_));
            if tx.send(msg).is_err() || stop {
                return;
            }
        }
    });
    rx
}

/// Connection to an external predictor.
pub struct ExternalPredictor {
    config: ExternalConfig,
    geometry: GridGeometry,
    writer: Box<dyn Write + Send>,
    incoming: Receiver<Incoming>,
    child: Option<Child>,
    tcp: Option<TcpStream>,
    stash: HashMap<u32, Response>,
    closed: Option<String>,
    version: u16,
    repaired: usize,
    degraded: usize,
}

impl std::fmt::Debug for ExternalPredictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalPredictor")
            .field("config", &self.config)
            .field("version", &self.version)
            .field("closed", &self.closed)
            .finish_non_exhaustive()
    }
}

impl ExternalPredictor {
    /// Opens the transport and waits for the greeting.
    pub fn connect(config: ExternalConfig, geometry: GridGeometry) -> Result<Self> {
        let (writer, incoming, child, tcp): (Box<dyn Write + Send>, _, _, _) = match &config.transport {
            Transport::Stdio { command, args } => {
                let mut child = Command::new(command)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| Error::Protocol(format!("cannot start '{command}': {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                (Box::new(stdin), spawn_reader(BufReader::new(stdout)), Some(child), None)
            }
            Transport::Tcp { address } => {
                let stream = TcpStream::connect(address)
                    .map_err(|e| Error::Protocol(format!("cannot connect to {address}: {e}")))?;
                stream.set_nodelay(true).ok();
                let reader = stream.try_clone().map_err(|e| Error::Protocol(e.to_string()))?;
                let writer = stream.try_clone().map_err(|e| Error::Protocol(e.to_string()))?;
                (
                    Box::new(writer),
                    spawn_reader(BufReader::new(reader)),
                    None,
                    Some(stream),
                )
            }
        };
        let mut client = Self {
            geometry,
            writer,
            incoming,
            child,
            tcp,
            stash: HashMap::new(),
            closed: None,
            version: 0,
            repaired: 0,
            degraded: 0,
            config,
        };
        match client.incoming.recv_timeout(client.config.timeout()) {
            Ok(Incoming::Hello(v)) if v == protocol::PROTOCOL_VERSION => client.version = v,
            Ok(Incoming::Hello(v)) => return Err(Error::Protocol(format!("unsupported protocol version {v}"))),
            Ok(Incoming::Closed(why)) => return Err(Error::Protocol(format!("no greeting: {why}"))),
            Ok(Incoming::Frame(_)) => return Err(Error::Protocol("frame before greeting".into())),
            Err(_) => return Err(Error::Timeout(client.config.timeout())),
        }
        Ok(client)
    }

    pub fn version(&self) -> u16 {
        self.version
    }

    /// Known cells overwritten so far because the server changed them.
    pub fn repaired_cells(&self) -> usize {
        self.repaired
    }

    /// Requests answered with the fallback map so far.
    pub fn degraded_count(&self) -> usize {
        self.degraded
    }

    /// Sends a request without waiting for the answer.
    pub fn submit(&mut self, request: &PredictionRequest) -> Result<()> {
        if let Some(why) = &self.closed {
            return Err(Error::Protocol(format!("connection closed: {why}")));
        }
        let payload = protocol::encode_request(request.id, &request.image)?;
        protocol::write_frame(&mut self.writer, &payload)
    }

    /// Waits for the response to request `id`, stashing others that arrive first.
    pub fn wait(&mut self, id: u32, timeout: Duration) -> Result<Response> {
        if let Some(r) = self.stash.remove(&id) {
            return Ok(r);
        }
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(why) = &self.closed {
                return Err(Error::Protocol(format!("connection closed: {why}")));
            }
            let left = deadline.saturating_duration_since(Instant::now());
            match self.incoming.recv_timeout(left) {
                Ok(Incoming::Frame(payload)) => {
                    let r = protocol::decode_response(&payload)?;
                    if r.id == id {
                        return Ok(r);
                    }
                    self.stash.insert(r.id, r);
                }
                Ok(Incoming::Hello(_)) => return Err(Error::Protocol("unexpected greeting".into())),
                Ok(Incoming::Closed(why)) => self.closed = Some(why),
                Err(RecvTimeoutError::Timeout) => return Err(Error::Timeout(timeout)),
                Err(RecvTimeoutError::Disconnected) => self.closed = Some("reader stopped".into()),
            }
        }
    }

    /// Turns a response into a map, repairing known cells.
    pub fn accept(&mut self, request: &PredictionRequest, response: &Response) -> Result<PredictedMap> {
        if (response.width, response.height) != self.geometry.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.geometry.dims(),
                actual: (response.width, response.height),
            });
        }
        let (grid, repaired) = grid_from_prediction(request, &response.pixels, &self.geometry)?;
        if repaired > 0 {
            log::info!(
                "request {}: repaired {repaired} known cells changed by the predictor",
                request.id
            );
            self.repaired += repaired;
        }
        Ok(PredictedMap {
            id: request.id,
            predictor: self.name().to_string(),
            grid,
            degraded: false,
        })
    }

    fn fallback(&mut self, request: &PredictionRequest, err: &Error) -> Result<PredictedMap> {
        log::warn!(
            "request {}: external predictor failed ({err}); using free-space fallback",
            request.id
        );
        self.degraded += 1;
        Ok(PredictedMap {
            id: request.id,
            predictor: self.name().to_string(),
            grid: fallback_grid(request, &self.geometry)?,
            degraded: true,
        })
    }
}

impl Predictor for ExternalPredictor {
    fn name(&self) -> &str {
        "external"
    }

    fn predict(&mut self, request: &PredictionRequest, _seed: u64) -> Result<PredictedMap> {
        request.validate(&self.geometry)?;
        let timeout = self.config.timeout();
        let outcome = self
            .submit(request)
            .and_then(|_| self.wait(request.id, timeout))
            .and_then(|r| self.accept(request, &r));
        match outcome {
            Ok(map) => Ok(map),
            Err(e) => self.fallback(request, &e),
        }
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        if let Some(stream) = &self.tcp {
            let _ = stream.shutdown(Shutdown::Both);
        }
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
