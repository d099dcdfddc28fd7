use std::io::{BufReader, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use explore_core::grid::{CellState, GridGeometry, OccupancyGrid};
use explore_core::predictor::protocol::{self, Response};
use explore_core::predictor::{
    honors_request, ExternalConfig, ExternalPredictor, PredictionRequest, Predictor, Transport,
};
use explore_core::worldgen::{generate, TownParams};

#[derive(Clone, Copy)]
enum Mode {
    /// Reads `n` requests, then answers them in reverse order.
    Reverse(usize),
    WrongDims,
    Silent,
}

/// Answers masked pixels with black, copies known ones.
fn fill(image: &explore_core::GridImage) -> Vec<u8> {
    image
        .pixels
        .iter()
        .zip(&image.mask)
        .map(|(&p, &m)| if m { 0 } else { p })
        .collect()
}

fn serve(mode: Mode) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let address = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut writer = stream.try_clone().unwrap();
        let mut reader = BufReader::new(stream);
        writer.write_all(&protocol::hello_bytes()).unwrap();
        let mut held = Vec::new();
        while let Ok(Some(frame)) = protocol::read_frame(&mut reader) {
            let (id, image) = protocol::decode_request(&frame).unwrap();
            let mut r = Response {
                id,
                width: image.width,
                height: image.height,
                pixels: fill(&image),
            };
            match mode {
                Mode::Reverse(n) => {
                    held.push(r);
                    if held.len() == n {
                        for r in held.drain(..).rev() {
                            protocol::write_frame(&mut writer, &protocol::encode_response(&r).unwrap()).unwrap();
                        }
                    }
                }
                Mode::WrongDims => {
                    r.width -= 1;
                    r.pixels.truncate(r.width * r.height);
                    protocol::write_frame(&mut writer, &protocol::encode_response(&r).unwrap()).unwrap();
                }
                Mode::Silent => {}
            }
        }
    });
    address
}

fn observed(seed: u64) -> OccupancyGrid {
    let (_, truth) = generate(&TownParams::with_seed(seed)).unwrap();
    let mut obs = truth.clone();
    let w = obs.width();
    for (i, c) in obs.cells_mut().iter_mut().enumerate() {
        if (i % w + i / w + seed as usize) % 3 == 0 {
            *c = CellState::Unknown;
        }
    }
    obs
}

fn tcp(address: String, timeout_secs: f64) -> ExternalConfig {
    ExternalConfig {
        transport: Transport::Tcp { address },
        timeout_secs,
    }
}

#[test]
fn pipelined_requests_over_tcp_match_by_id() {
    let n = 100;
    let g = GridGeometry::default();
    let mut client = ExternalPredictor::connect(tcp(serve(Mode::Reverse(n)), 10.0), g).unwrap();
    assert_eq!(client.version(), 1);
    let requests: Vec<PredictionRequest> = (0..n as u32)
        .map(|id| PredictionRequest::from_observed(id, id as f64, &observed(id as u64 % 4)))
        .collect();
    for r in &requests {
        client.submit(r).unwrap();
    }
    for r in &requests {
        let response = client.wait(r.id, Duration::from_secs(10)).unwrap();
        assert_eq!(response.id, r.id);
        let map = client.accept(r, &response).unwrap();
        assert!(!map.degraded);
        assert!(honors_request(r, &map.grid));
    }
    assert_eq!(client.repaired_cells(), 0);
}

#[test]
fn stdio_transport_with_framed_greeting() {
    let script = r#"
import struct, sys
inp, out = sys.stdin.buffer, sys.stdout.buffer
hello = b"MPHELLO" + struct.pack("<H", 1)
out.write(struct.pack("<I", len(hello)) + hello); out.flush()
while True:
    head = inp.read(4)
    if len(head) < 4:
        break
    (n,) = struct.unpack("<I", head)
    p = inp.read(n)
    rid, w, h = struct.unpack("<IHH", p[4:12])
    px = bytes(0 if b == 127 else b for b in p[12:12 + w * h])
    body = b"MPRS" + struct.pack("<IHH", rid, w, h) + px
    out.write(struct.pack("<I", len(body)) + body); out.flush()
"#;
    let config = ExternalConfig {
        transport: Transport::Stdio {
            command: "python3".into(),
            args: vec!["-c".into(), script.into()],
        },
        timeout_secs: 20.0,
    };
    let g = GridGeometry::default();
    let mut client = ExternalPredictor::connect(config, g).unwrap();
    for id in 0..5 {
        let r = PredictionRequest::from_observed(id, 0.0, &observed(id as u64));
        let map = client.predict(&r, 0).unwrap();
        assert!(!map.degraded);
        assert!(honors_request(&r, &map.grid));
        let masked_occupied = r
            .image
            .mask
            .iter()
            .zip(map.grid.cells())
            .all(|(&m, &c)| !m || c == CellState::Occupied);
        assert!(masked_occupied);
    }
}

#[test]
fn wrong_dimensions_fall_back_to_free_space() {
    let g = GridGeometry::default();
    let mut client = ExternalPredictor::connect(tcp(serve(Mode::WrongDims), 5.0), g).unwrap();
    let r = PredictionRequest::from_observed(1, 0.0, &observed(1));
    let map = client.predict(&r, 0).unwrap();
    assert!(map.degraded);
    assert!(honors_request(&r, &map.grid));
    assert!(r
        .image
        .mask
        .iter()
        .zip(map.grid.cells())
        .all(|(&m, &c)| !m || c == CellState::Free));
    assert_eq!(client.degraded_count(), 1);
}

#[test]
fn silent_server_times_out_into_fallback() {
    let g = GridGeometry::default();
    let mut client = ExternalPredictor::connect(tcp(serve(Mode::Silent), 0.3), g).unwrap();
    let r = PredictionRequest::from_observed(7, 0.0, &observed(2));
    let map = client.predict(&r, 0).unwrap();
    assert!(map.degraded);
}

#[test]
fn bad_greeting_is_rejected() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let address = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        s.write_all(b"MPHELLO\x02\x00").unwrap();
        thread::sleep(Duration::from_millis(200));
    });
    let err = ExternalPredictor::connect(tcp(address, 2.0), GridGeometry::default()).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
}
