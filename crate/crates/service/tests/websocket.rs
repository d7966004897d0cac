use std::sync::Arc;
use std::time::Duration;

use dialschema::session::{Clock, VirtualClock};
use dialservice::{start, ErrorCode, Resume, ServiceConfig, WireMessage};
use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio_tungstenite::tungstenite::Message;

const PACK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../packs/sophie");

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn connect(addr: std::net::SocketAddr) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

async fn send(ws: &mut Ws, m: WireMessage) {
    ws.send(Message::Text(m.to_json().into())).await.unwrap();
}

/// Reads until `done` holds for the collected messages.
async fn read_until(ws: &mut Ws, done: impl Fn(&[WireMessage]) -> bool) -> Vec<WireMessage> {
    let mut got = Vec::new();
    while !done(&got) {
        let frame = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("reply in time").unwrap().unwrap();
        if let Message::Text(t) = frame {
            got.push(WireMessage::from_json(&t).unwrap());
        }
    }
    got
}

fn traces(ms: &[WireMessage]) -> usize {
    ms.iter().filter(|m| matches!(m, WireMessage::Trace { .. })).count()
}

async fn http_get(addr: std::net::SocketAddr, path: &str) -> (u16, String) {
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    s.write_all(format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").as_bytes()).await.unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).await.unwrap();
    let status = buf[9..12].parse().unwrap();
    let body = buf.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn conversation_reconnect_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServiceConfig::new(PACK, dir.path());
    config.listen = "127.0.0.1:0".into();
    config.tick_ms = 20;
    let clock = VirtualClock::new();
    let svc = start(config, Some(Arc::new(clock.clone()) as Arc<dyn Clock>)).await.unwrap();
    let addr = svc.addr;

    let mut ws = connect(addr).await;
    send(&mut ws, WireMessage::CreateSession { token: None, seed: None, resume: None }).await;
    let mut seen = read_until(&mut ws, |m| traces(m) == 1).await;
    let WireMessage::SessionCreated { session, .. } = seen[0].clone() else { panic!() };

    let lines = ["hello sophie", "did you get your test results ?", "i am afraid the cancer has spread", "we can talk about treatment", "okay"];
    for (i, text) in lines.iter().enumerate() {
        let before = seen.len();
        send(&mut ws, WireMessage::UserTurn { session: session.clone(), seq: i as u64 + 1, text: text.to_string() }).await;
        let got = read_until(&mut ws, |m| m.iter().any(|x| matches!(x, WireMessage::Trace { .. } | WireMessage::Error { .. }))).await;
        seen.extend(got);
        assert!(seen[before..].iter().any(|m| matches!(m, WireMessage::SystemTurn { .. })), "{:?}", &seen[before..]);
        // allow any second system turn of the same reply to arrive
        tokio::time::sleep(Duration::from_millis(50)).await;
    }

    send(&mut ws, WireMessage::UserTurn { session: session.clone(), seq: 2, text: "replayed".into() }).await;
    let err = read_until(&mut ws, |m| m.iter().any(|x| matches!(x, WireMessage::Error { .. }))).await;
    assert!(err.iter().any(|m| matches!(m, WireMessage::Error { code: ErrorCode::Replay, .. })));
    seen.extend(err.into_iter().filter(|m| !matches!(m, WireMessage::Error { .. })));
    drop(ws);

    // a fresh connection picks up from the last seq seen, without repeats
    let cut = seen.len() / 2;
    let after = seen[cut - 1].seq().unwrap();
    let mut ws = connect(addr).await;
    send(&mut ws, WireMessage::CreateSession { token: None, seed: None, resume: Some(Resume { session: session.clone(), after }) }).await;
    let tail = read_until(&mut ws, |m| m.len() >= seen.len() - cut).await;
    assert_eq!(tail, seen[cut..]);

    let (status, body) = http_get(addr, &format!("/sessions/{session}/transcript")).await;
    assert_eq!(status, 200);
    assert_eq!(body, svc.registry.export_transcript(&session).unwrap());
    assert_eq!(http_get(addr, "/sessions/missing/transcript").await.0, 404);
    assert_eq!(http_get(addr, "/health").await, (200, "ok".into()));

    // garbage frames get an error, not a hangup
    ws.send(Message::Text("{\"kind\":\"Nope\"}".into())).await.unwrap();
    let err = read_until(&mut ws, |m| !m.is_empty()).await;
    assert!(matches!(err[0], WireMessage::Error { code: ErrorCode::BadMessage, .. }));

    // silence long enough for the plan to move on is pushed without a request
    let (mut ws2, fresh) = {
        let mut ws2 = connect(addr).await;
        send(&mut ws2, WireMessage::CreateSession { token: None, seed: None, resume: None }).await;
        let got = read_until(&mut ws2, |m| traces(m) == 1).await;
        (ws2, got)
    };
    clock.advance(Duration::from_secs(12));
    let pushed = read_until(&mut ws2, |m| traces(m) >= 1).await;
    assert_eq!(pushed[0].session(), fresh[0].session());
    svc.shutdown();
}
