use std::sync::Arc;
use std::time::Duration;

use acord_core::config::{EnvKind, ExperimentConfig};
use acord_core::session::{ServerMessage, SessionStore};
use acord_server::{serve_on, AppState};
use futures::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::time::timeout;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn launch(dir: &std::path::Path) -> String {
    let mut cfg = ExperimentConfig::default();
    cfg.env.kind = EnvKind::Painter;
    let env = cfg.build_env().unwrap();
    let agent = cfg.build_agent(env.as_dyn()).unwrap();
    let state = AppState::new(
        cfg.shapes().unwrap(),
        cfg.session_config(),
        Some(agent.snapshot()),
        SessionStore::new(dir).unwrap(),
    );
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve_on(listener, Arc::new(state)));
    format!("127.0.0.1:{}", addr.port())
}

async fn send(ws: &mut Ws, json: &str) {
    ws.send(Message::text(json)).await.unwrap();
}

async fn next(ws: &mut Ws) -> ServerMessage {
    loop {
        let msg = timeout(Duration::from_secs(5), ws.next()).await.expect("server went quiet").unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

/// Next non-frame reply.
async fn reply(ws: &mut Ws) -> ServerMessage {
    loop {
        match next(ws).await {
            ServerMessage::State(_) => continue,
            other => return other,
        }
    }
}

fn acked_k(msg: &ServerMessage) -> Vec<f64> {
    match msg {
        ServerMessage::Ack { of, k: Some(k), .. } if of == "set_k" => k.clone(),
        other => panic!("expected set_k ack, got {other:?}"),
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn acord_session_over_websocket() {
    let dir = tempfile::tempdir().unwrap();
    let host = launch(dir.path()).await;
    let (mut ws, _) = connect_async(format!("ws://{host}/ws")).await.unwrap();

    send(&mut ws, r#"{"type":"start","condition":"acord","shape":"heart","seed":3}"#).await;
    let id = match reply(&mut ws).await {
        ServerMessage::Ack { of, session: Some(id), .. } if of == "start" => id,
        other => panic!("{other:?}"),
    };

    let first = timeout(Duration::from_secs(1), async {
        loop {
            if let ServerMessage::State(f) = next(&mut ws).await {
                return f;
            }
        }
    })
    .await
    .expect("no state frame within 1 s");
    assert!(first.t >= 1);

    send(&mut ws, r#"{"type":"set_k","k":[0.3,0.7]}"#).await;
    assert_eq!(acked_k(&reply(&mut ws).await), vec![0.3, 0.7]);
    // A frame already in flight may predate the change; the one after it may not.
    let mut seen = Vec::new();
    for _ in 0..3 {
        if let ServerMessage::State(f) = next(&mut ws).await {
            seen.push(f.k.clone());
        }
    }
    assert!(seen.iter().any(|k| k.as_deref() == Some(&[0.3, 0.7][..])), "{seen:?}");

    send(&mut ws, r#"{"type":"set_k","k":[1.4,-0.2]}"#).await;
    assert_eq!(acked_k(&reply(&mut ws).await), vec![1.0, 0.0]);

    send(&mut ws, r#"{"type":"joystick","u":[0.1,0.1]}"#).await;
    assert!(matches!(reply(&mut ws).await, ServerMessage::Error { .. }));

    send(&mut ws, r#"{"type":"start","condition":"acord","shape":"house"}"#).await;
    match reply(&mut ws).await {
        ServerMessage::Error { reason } => assert!(reason.contains("already running"), "{reason}"),
        other => panic!("{other:?}"),
    }

    send(&mut ws, r#"{"type":"set_k","k":[0.5]}"#).await;
    assert!(matches!(reply(&mut ws).await, ServerMessage::Error { .. }));
    send(&mut ws, r#"{"type":"bogus"}"#).await;
    assert!(matches!(reply(&mut ws).await, ServerMessage::Error { .. }));

    send(&mut ws, r#"{"type":"finish"}"#).await;
    let scores = match reply(&mut ws).await {
        ServerMessage::Ack { of, session, scores: Some(s), .. } if of == "finish" => {
            assert_eq!(session.as_deref(), Some(id.as_str()));
            s
        }
        other => panic!("{other:?}"),
    };
    assert!((0.0..=1.0).contains(&scores.coverage));

    let http = reqwest::Client::new();
    let rec: serde_json::Value = http
        .get(format!("http://{host}/sessions/{id}"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(rec["id"], id.as_str());
    assert_eq!(rec["condition"], "acord");
    let missing = http.get(format!("http://{host}/sessions/nope")).send().await.unwrap();
    assert_eq!(missing.status().as_u16(), 404);

    let shapes: serde_json::Value = http.get(format!("http://{host}/shapes")).send().await.unwrap().json().await.unwrap();
    let names: Vec<_> = shapes.as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap().to_string()).collect();
    assert_eq!(names, ["heart", "house"]);
    let styles = http.get(format!("http://{host}/styles")).send().await.unwrap();
    assert!(styles.status().is_success());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn sa_and_styles_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let host = launch(dir.path()).await;

    let (mut ws, _) = connect_async(format!("ws://{host}/ws")).await.unwrap();
    send(&mut ws, r#"{"type":"set_k","k":[0.5,0.5]}"#).await;
    assert!(matches!(reply(&mut ws).await, ServerMessage::Error { .. }));
    send(&mut ws, r#"{"type":"start","condition":"sa","shape":"house","seed":1}"#).await;
    assert!(matches!(reply(&mut ws).await, ServerMessage::Ack { .. }));
    send(&mut ws, r#"{"type":"joystick","u":[2.0,-0.5]}"#).await;
    match reply(&mut ws).await {
        ServerMessage::Ack { u: Some(u), .. } => assert_eq!(u, [1.0, -0.5]),
        other => panic!("{other:?}"),
    }
    send(&mut ws, r#"{"type":"finish"}"#).await;
    assert!(matches!(reply(&mut ws).await, ServerMessage::Ack { .. }));
    // The slot is free again once finished.
    send(&mut ws, r#"{"type":"start","condition":"styles","shape":"house"}"#).await;
    assert!(matches!(reply(&mut ws).await, ServerMessage::Ack { .. }));
    send(&mut ws, r#"{"type":"select_style","index":9}"#).await;
    assert!(matches!(reply(&mut ws).await, ServerMessage::Error { .. }));
    send(&mut ws, r#"{"type":"select_style","index":2}"#).await;
    match reply(&mut ws).await {
        ServerMessage::Ack { index, .. } => assert_eq!(index, Some(2)),
        other => panic!("{other:?}"),
    }
    ws.close(None).await.unwrap();
}
