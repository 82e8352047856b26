use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use skillmatrix::inference::{serve_inference, TcpInferenceClient};
use skillmatrix::latency::{Latency, LatencyModel};
use skillmatrix::remote::RemotePlanner;
use skillmatrix_core::bench::{level_scene, Level};
use skillmatrix_core::planner::{default_skill_list, PlanError, Planner};
use skillmatrix_core::sim::World;
use skillmatrix_core::skills::{InferenceClient, InferenceRequest, InferenceResponse, TransportError};

fn request() -> InferenceRequest {
    let scene = level_scene(Level::I, 3);
    let world = World::spawn(&scene.spec, 3).unwrap();
    InferenceRequest {
        prompt: format!("Move to {}", scene.object),
        snapshot: world.camera_view(1).unwrap(),
        state: world.robot(1).unwrap().clone(),
    }
}

fn echo_policy() -> Arc<Mutex<dyn skillmatrix::inference::Policy>> {
    Arc::new(Mutex::new(|r: &InferenceRequest| InferenceResponse {
        tokens: vec![r.prompt.len() as u32],
        diagnostic: None,
    }))
}

#[test]
fn injected_latency_applies_on_both_legs() {
    let ep = serve_inference(
        "127.0.0.1:0",
        echo_policy(),
        Latency::new(LatencyModel::Constant { ms: 100.0 }, 1),
    )
    .unwrap();
    let mut client = TcpInferenceClient::new(ep.addr());
    let req = request();
    for _ in 0..3 {
        let t = Instant::now();
        let resp = client.infer(&req).unwrap();
        let rtt = t.elapsed();
        assert_eq!(resp.tokens, vec![req.prompt.len() as u32]);
        assert!(rtt >= Duration::from_millis(200), "round trip took {rtt:?}");
        assert!(rtt < Duration::from_millis(600), "round trip took {rtt:?}");
    }
}

#[test]
fn unreachable_server_is_permanent_after_retries() {
    let addr = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let mut client = TcpInferenceClient::new(addr).with_timeout(Duration::from_millis(200));
    assert!(matches!(client.try_once(&request()), Err(TransportError::Retriable(_))));
    match client.infer(&request()) {
        Err(TransportError::Permanent(msg)) => assert!(msg.contains('3'), "{msg}"),
        other => panic!("expected a permanent failure, got {other:?}"),
    }
}

#[test]
fn silent_server_times_out() {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap();
    let _hold = thread::spawn(move || {
        let conns: Vec<TcpStream> = l.incoming().take(3).filter_map(Result::ok).collect();
        thread::sleep(Duration::from_secs(2));
        drop(conns);
    });
    let mut client = TcpInferenceClient::new(addr)
        .with_timeout(Duration::from_millis(100))
        .with_attempts(3);
    let t = Instant::now();
    assert!(matches!(client.infer(&request()), Err(TransportError::Permanent(_))));
    assert!(t.elapsed() >= Duration::from_millis(300));
}

/// Minimal HTTP/1.1 responder: answers each request with the next status
/// and body, and records what it was sent.
fn stub(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/plan", l.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = l.accept() else { return };
            let mut r = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                r.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head += &line;
                if line == "\r\n" || line.is_empty() {
                    break;
                }
            }
            let mut buf = vec![0; len];
            r.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(head + &String::from_utf8(buf).unwrap());
            let mut s = stream;
            write!(
                s,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

#[test]
fn remote_planner_sends_prompt_and_parses_reply() {
    let body = serde_json::json!({
        "reply": "1. Move to red can\n2. Grasp red can\n3. Move to white box\n4. Position red can over the white box\n5. Release red can"
    })
    .to_string();
    let (url, seen) = stub(vec![(200, body)]);
    let mut p = RemotePlanner::new(&url, Some("secret".into())).with_timeout(Duration::from_secs(5));
    let plan = p.plan("Put the red can into the white box", &default_skill_list()).unwrap();
    assert_eq!(plan.len(), 5);
    assert_eq!(plan.steps[3].container.as_deref(), Some("white box"));
    let req = seen.lock().unwrap()[0].clone();
    assert!(req.to_ascii_lowercase().contains("authorization: bearer secret"));
    assert!(req.contains("Put the red can into the white box"));
    assert!(req.contains("Move to <object>"));
}

#[test]
fn remote_planner_retries_server_errors() {
    let ok = serde_json::json!({"text": "1. Move to green can"}).to_string();
    let (url, seen) = stub(vec![(503, "{}".into()), (503, "{}".into()), (200, ok)]);
    let mut p = RemotePlanner::new(&url, None).with_timeout(Duration::from_secs(5));
    let plan = p.plan("go to the green can", &default_skill_list()).unwrap();
    assert_eq!(plan.texts(), vec!["Move to green can"]);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn remote_planner_gives_up_after_three_failures() {
    let (url, _) = stub(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
    let mut p = RemotePlanner::new(&url, None).with_timeout(Duration::from_secs(5));
    let err = p.plan("anything", &default_skill_list()).unwrap_err();
    assert!(matches!(err, PlanError::Transport(_)), "{err:?}");
}
