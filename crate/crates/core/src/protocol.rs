//! JSON-lines protocol for classifiers living in another process.
//!
//! Every message is one line holding a JSON object whose first field is
//! `kind`. The client sends `info` once, then any number of `query`
//! requests; the server answers each request with exactly one line, in
//! order. Only hard labels cross the wire.
//!
//! ```text
//! > {"kind":"info"}
//! < {"kind":"info","classes":4,"dofs":33,"frames":24}
//! > {"kind":"query","id":0,"frames":[[0.1, ...], ...]}
//! < {"kind":"label","id":0,"label":2}
//! ```
//!
//! Malformed requests get `{"kind":"error","id":<id or -1>,"message":...}`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::Motion;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Request {
    Info,
    Query { id: i64, frames: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Response {
    Info {
        classes: usize,
        dofs: usize,
        frames: usize,
    },
    Label {
        id: i64,
        label: usize,
    },
    Error {
        id: i64,
        message: String,
    },
}

impl Request {
    pub fn query(id: i64, motion: &Motion) -> Self {
        Request::Query {
            id,
            frames: motion.frames().rows().into_iter().map(|r| r.to_vec()).collect(),
        }
    }
}

/// Serializes a message as a single line without the trailing newline.
pub fn encode<T: Serialize>(msg: &T) -> Result<String> {
    Ok(serde_json::to_string(msg)?)
}

pub fn decode_request(line: &str) -> Result<Request> {
    serde_json::from_str(line.trim_end()).map_err(|e| Error::Protocol(e.to_string()))
}

pub fn decode_response(line: &str) -> Result<Response> {
    serde_json::from_str(line.trim_end()).map_err(|e| Error::Protocol(e.to_string()))
}

/// Best-effort id of a request line that failed to parse, or −1.
pub fn salvage_id(line: &str) -> i64 {
    serde_json::from_str::<serde_json::Value>(line)
        .ok()
        .and_then(|v| v.get("id").and_then(|id| id.as_i64()))
        .unwrap_or(-1)
}

/// Model dimensions advertised by a server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerInfo {
    pub classes: usize,
    pub dofs: usize,
    pub frames: usize,
}

/// Answers requests from `input` on `output` until end of input, one line
/// per request, flushing after each. `classify` sees only queries of the
/// advertised shape.
pub fn serve<R, W, F>(input: R, mut output: W, info: ServerInfo, mut classify: F) -> Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&[Vec<f64>]) -> Result<usize>,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = match decode_request(&line) {
            Err(e) => Response::Error {
                id: salvage_id(&line),
                message: e.to_string(),
            },
            Ok(Request::Info) => Response::Info {
                classes: info.classes,
                dofs: info.dofs,
                frames: info.frames,
            },
            Ok(Request::Query { id, frames }) => {
                if frames.len() != info.frames || frames.iter().any(|r| r.len() != info.dofs) {
                    Response::Error {
                        id,
                        message: format!(
                            "expected {} frames of {} values",
                            info.frames, info.dofs
                        ),
                    }
                } else {
                    match classify(&frames) {
                        Ok(label) => Response::Label { id, label },
                        Err(e) => Response::Error {
                            id,
                            message: e.to_string(),
                        },
                    }
                }
            }
        };
        writeln!(output, "{}", encode(&response)?)?;
        output.flush()?;
    }
    Ok(())
}

/// A running server process spoken to over its standard streams.
#[derive(Debug)]
pub struct ExternalClassifier {
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: BufReader<ChildStdout>,
    info: ServerInfo,
    next_id: i64,
    command: String,
}

impl ExternalClassifier {
    /// Launches `command` through the shell and performs the `info`
    /// handshake.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = Some(BufWriter::new(child.stdin.take().expect("piped stdin")));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut ext = Self {
            child,
            stdin,
            stdout,
            info: ServerInfo {
                classes: 0,
                dofs: 0,
                frames: 0,
            },
            next_id: 0,
            command: command.to_string(),
        };
        match ext.round_trip(&Request::Info)? {
            Response::Info {
                classes,
                dofs,
                frames,
            } => {
                ext.info = ServerInfo {
                    classes,
                    dofs,
                    frames,
                }
            }
            other => {
                return Err(Error::Protocol(format!(
                    "expected info response from `{command}`, got {other:?}"
                )))
            }
        }
        if ext.info.classes < 2 {
            return Err(Error::Protocol(format!(
                "server advertises {} classes",
                ext.info.classes
            )));
        }
        Ok(ext)
    }

    pub fn info(&self) -> ServerInfo {
        self.info
    }

    fn round_trip(&mut self, req: &Request) -> Result<Response> {
        let stdin = self.stdin.as_mut().expect("open until drop");
        writeln!(stdin, "{}", encode(req)?)?;
        stdin.flush()?;
        let mut line = String::new();
        if self.stdout.read_line(&mut line)? == 0 {
            return Err(Error::Protocol(format!(
                "`{}` closed its output",
                self.command
            )));
        }
        decode_response(&line)
    }

    /// Sends one query; the caller has already checked the shape.
    pub fn query(&mut self, motion: &Motion) -> Result<usize> {
        let id = self.next_id;
        self.next_id += 1;
        match self.round_trip(&Request::query(id, motion))? {
            Response::Label { id: got, label } if got == id => {
                if label >= self.info.classes {
                    return Err(Error::LabelOutOfRange {
                        label,
                        classes: self.info.classes,
                    });
                }
                Ok(label)
            }
            Response::Error { message, .. } => Err(Error::Protocol(message)),
            other => Err(Error::Protocol(format!(
                "expected label for id {id}, got {other:?}"
            ))),
        }
    }
}

impl Drop for ExternalClassifier {
    fn drop(&mut self) {
        // Closing stdin lets a well-behaved server exit on its own.
        drop(self.stdin.take());
        for _ in 0..50 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(std::time::Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_is_serialized_first() {
        let s = encode(&Response::Label { id: 3, label: 1 }).unwrap();
        assert_eq!(s, r#"{"kind":"label","id":3,"label":1}"#);
        let s = encode(&Request::Info).unwrap();
        assert_eq!(s, r#"{"kind":"info"}"#);
    }

    #[test]
    fn floats_round_trip_exactly() {
        let v = 0.1 + 0.2;
        let req = Request::Query {
            id: 0,
            frames: vec![vec![v, -1e-300, 12345.678901234567]],
        };
        let back = decode_request(&encode(&req).unwrap()).unwrap();
        assert_eq!(back, req);
    }

    #[test]
    fn salvage_id_falls_back() {
        assert_eq!(salvage_id(r#"{"kind":"query","id":7}"#), 7);
        assert_eq!(salvage_id("not json"), -1);
    }
}
