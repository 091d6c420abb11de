mod common;

use std::sync::Arc;
use std::thread;

use fitbot_core::engine::Engine;
use fitbot_core::service::http::{self, AppState};
use fitbot_core::service::{MemoryProfileStore, MemorySessionStore, MessageRequest, Service};
use fitbot_core::{fixtures, parse_skill, SessionState};
use serde_json::Value;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

async fn send(
    addr: std::net::SocketAddr,
    method: &str,
    path: &str,
    body: &[u8],
) -> (u16, String, Vec<u8>) {
    let mut stream = TcpStream::connect(addr).await.unwrap();
    let head = format!(
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes()).await.unwrap();
    stream.write_all(body).await.unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).await.unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let head = String::from_utf8(raw[..split].to_vec()).unwrap();
    let status = head.split(' ').nth(1).unwrap().parse().unwrap();
    (status, head.to_lowercase(), raw[split + 4..].to_vec())
}

#[tokio::test(flavor = "multi_thread")]
async fn http_surface() {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let state = AppState::pending("http://localhost:3000");
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(http::serve(listener, state.clone(), async {
        let _ = rx.await;
    }));

    let (status, head, _) = send(addr, "GET", "/health", b"").await;
    assert_eq!(status, 503);
    assert!(head.contains("access-control-allow-origin: http://localhost:3000"));

    assert!(state.install(Arc::new(common::fixture_service(Arc::new(
        MemorySessionStore::default()
    )))));
    let (status, _, body) = send(addr, "GET", "/health", b"").await;
    assert_eq!(status, 200);
    let health: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(health["counts"]["intents"], 6);
    assert_eq!(health["counts"]["entities"], 4);
    let (_, _, again) = send(addr, "GET", "/health", b"").await;
    let again: Value = serde_json::from_slice(&again).unwrap();
    assert_eq!(again["counts"], health["counts"]);

    let (status, head, _) = send(addr, "OPTIONS", "/v2/sessions", b"").await;
    assert_eq!(status, 204);
    assert!(head.contains("access-control-allow-methods"));

    let (status, _, body) = send(addr, "POST", "/v2/sessions", b"").await;
    assert_eq!(status, 201);
    let id = serde_json::from_slice::<Value>(&body).unwrap()["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let path = format!("/v2/sessions/{id}/message");
    let (status, head, body) = send(addr, "POST", &path, &common::message_body("hello")).await;
    assert_eq!(status, 200);
    assert!(head.contains("content-type: application/json"));
    let reply: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(reply["output"]["intents"][0]["intent"], "greetings");
    assert_eq!(reply["output"]["generic"][0]["response_type"], "text");

    let big = common::message_body(&"x".repeat(3000));
    assert_eq!(send(addr, "POST", &path, &big).await.0, 413);
    assert_eq!(send(addr, "POST", &path, b"not json").await.0, 400);
    assert_eq!(
        send(addr, "DELETE", &format!("/v2/sessions/{id}"), b"")
            .await
            .0,
        204
    );
    assert_eq!(
        send(addr, "POST", &path, &common::message_body("hello"))
            .await
            .0,
        404
    );

    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}

#[test]
fn capture_replay_is_byte_identical() {
    common::assert_capture_replay();
}

#[test]
fn shared_file_store_across_services() {
    common::assert_shared_store();
}

#[test]
fn concurrent_sessions_do_not_interfere() {
    let svc = Arc::new(common::fixture_service(Arc::new(
        MemorySessionStore::default(),
    )));
    let expected = common::service_transcript(&svc);
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let svc = svc.clone();
            thread::spawn(move || common::service_transcript(&svc))
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), expected);
    }
}

#[test]
fn one_session_serializes_writers() {
    let store = Arc::new(MemorySessionStore::default());
    let svc = Arc::new(common::fixture_service(store.clone()));
    let id = common::new_session(&svc);
    let handles: Vec<_> = (0..6)
        .map(|_| {
            let (svc, id) = (svc.clone(), id.clone());
            thread::spawn(move || {
                for _ in 0..10 {
                    svc.handle_message(&id, &MessageRequest::text("hello"))
                        .unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    use fitbot_core::service::{Clock, SessionStore};
    let now = common::fixed_clock().now();
    let session: SessionState = store.load(&id, now).unwrap().unwrap();
    assert_eq!(session.turn_counter, 60);
}

#[test]
fn reformulation_through_the_service() {
    let profiles = Arc::new(MemoryProfileStore::default());
    let svc = common::fixture_service(Arc::new(MemorySessionStore::default()))
        .with_reformulation(Arc::new(fixtures::catalog()), profiles.clone());
    let id = common::new_session(&svc);
    let mut req = MessageRequest::text("book a trainer session");
    req.context = Some(serde_json::from_str(r#"{"user_id": "ana"}"#).unwrap());
    let r = svc.handle_message(&id, &req).unwrap();
    let srq = r.output.srq.as_ref().unwrap();
    assert_eq!(srq.task.task_id, "trainer_booking");
    assert_eq!(r.context["task_id"], "trainer_booking");
    assert_eq!(r.context["task_state"], 0);
    use fitbot_core::service::ProfileStore;
    let stored = profiles.load("ana").unwrap();
    assert_eq!(stored.observation_count, 1);
    assert!(stored.weight("trainer") > 0.0);

    let r = svc
        .handle_message(&id, &MessageRequest::text("book a session for friday"))
        .unwrap();
    let srq = r.output.srq.unwrap();
    assert!(
        srq.final_terms.contains(&"trainer".to_string()),
        "{:?}",
        srq.final_terms
    );
}

#[test]
fn jump_cycles_fall_back() {
    let mut doc: Value = serde_json::from_str(fixtures::SKILL_JSON).unwrap();
    let nodes = doc["dialog_nodes"].as_array_mut().unwrap();
    nodes.insert(0, serde_json::json!({"id": "loop_a", "condition": "#goodbye", "responses": ["a"], "jump_to": "loop_b"}));
    nodes.insert(1, serde_json::json!({"id": "loop_b", "condition": "!true", "responses": ["b"], "jump_to": "loop_a"}));
    let skill = parse_skill(&serde_json::to_vec(&doc).unwrap()).unwrap();
    let engine = Arc::new(Engine::new(skill).unwrap());
    let svc = Service::new(engine, Arc::new(MemorySessionStore::default()))
        .with_clock(common::fixed_clock());
    let id = common::new_session(&svc);
    let r = svc.route(
        "POST",
        &format!("/v2/sessions/{id}/message"),
        &common::message_body("bye"),
    );
    assert_eq!(r.status, 200);
    assert_eq!(
        common::reply_lines(&r.body),
        ["I can only help with fitness topics such as diet plans, workouts and trainer sessions."]
    );
}
