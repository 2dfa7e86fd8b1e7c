use std::io::Cursor;

use mgmw::protocol::{decode_request, decode_response, encode, serve, Request, Response, ServerInfo};
use serde::Deserialize;

#[derive(Deserialize)]
struct Vectors {
    server: Server,
    exchanges: Vec<Exchange>,
}

#[derive(Deserialize)]
struct Server {
    stub: String,
    classes: usize,
    dofs: usize,
    frames: usize,
}

#[derive(Deserialize)]
struct Exchange {
    request: String,
    response: String,
    #[serde(default)]
    r#match: Option<String>,
}

fn load() -> Vectors {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../testdata/protocol_vectors.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn sign(frames: &[Vec<f64>]) -> mgmw::Result<usize> {
    let s = frames.iter().flatten().fold(0.0, |a, v| a + v);
    Ok(usize::from(s > 0.0))
}

fn kind_id(r: &Response) -> (&'static str, Option<i64>) {
    match r {
        Response::Info { .. } => ("info", None),
        Response::Label { id, .. } => ("label", Some(*id)),
        Response::Error { id, .. } => ("error", Some(*id)),
    }
}

#[test]
fn pipelined_server_matches_vectors() {
    let v = load();
    assert_eq!(v.server.stub, "sign");
    let info = ServerInfo {
        classes: v.server.classes,
        dofs: v.server.dofs,
        frames: v.server.frames,
    };
    let input: String = v.exchanges.iter().map(|e| format!("{}\n", e.request)).collect();
    let mut out = Vec::new();
    serve(Cursor::new(input), &mut out, info, sign).unwrap();
    let lines: Vec<&str> = std::str::from_utf8(&out).unwrap().lines().collect();
    assert_eq!(lines.len(), v.exchanges.len());
    for (e, got) in v.exchanges.iter().zip(lines) {
        match e.r#match.as_deref() {
            Some("kind_id") => {
                let (want, got) = (decode_response(&e.response).unwrap(), decode_response(got).unwrap());
                assert_eq!(kind_id(&want), kind_id(&got), "request {}", e.request);
            }
            None => assert_eq!(got, e.response, "request {}", e.request),
            Some(other) => panic!("unknown match rule {other}"),
        }
    }
}

#[test]
fn well_formed_messages_reencode_canonically() {
    for e in load().exchanges {
        if let Ok(req) = decode_request(&e.request) {
            assert_eq!(encode(&req).unwrap(), e.request);
            if let Request::Query { frames, .. } = &req {
                assert!(frames.iter().all(|r| r.iter().all(|v| v.is_finite())));
            }
        }
        if e.r#match.is_none() {
            let resp = decode_response(&e.response).unwrap();
            assert_eq!(encode(&resp).unwrap(), e.response);
        }
    }
}
