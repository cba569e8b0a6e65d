use fwswarm_core::gcs::WorkflowState;
use fwswarm_core::sim::config::ScenarioConfig;
use fwswarm_core::sim::{scenarios, Simulation, StepMode};
use fwswarm_gateway::{serve, ServeConfig, ServerMessage, Server};
use std::net::SocketAddr;
use std::time::Duration;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio::time::timeout;

struct Client {
    lines: Lines<BufReader<OwnedReadHalf>>,
    wr: OwnedWriteHalf,
}

impl Client {
    async fn connect(addr: SocketAddr) -> Self {
        let (rd, wr) = TcpStream::connect(addr).await.unwrap().into_split();
        Self {
            lines: BufReader::new(rd).lines(),
            wr,
        }
    }

    async fn next(&mut self) -> (String, ServerMessage) {
        let line = timeout(Duration::from_secs(10), self.lines.next_line())
            .await
            .expect("message within 10 s")
            .unwrap()
            .expect("connection open");
        let msg = serde_json::from_str(&line).unwrap_or_else(|e| panic!("{e}: {line}"));
        (line, msg)
    }

    async fn until(&mut self, pred: impl Fn(&ServerMessage) -> bool) -> (String, ServerMessage) {
        let deadline = tokio::time::Instant::now() + Duration::from_secs(30);
        loop {
            assert!(tokio::time::Instant::now() < deadline, "expected message not seen within 30 s");
            let m = self.next().await;
            if pred(&m.1) {
                return m;
            }
        }
    }

    async fn send(&mut self, line: &str) {
        self.wr.write_all(line.as_bytes()).await.unwrap();
        self.wr.write_all(b"\n").await.unwrap();
    }
}

async fn start(cfg: ScenarioConfig, speed: f64) -> Server {
    let sim = Simulation::new(cfg, StepMode::Sequential).unwrap();
    serve(
        sim,
        ServeConfig {
            listen: "127.0.0.1:0".parse().unwrap(),
            push_hz: 2.0,
            speed,
        },
    )
    .await
    .unwrap()
}

fn airborne(n: usize, duration: f64) -> ScenarioConfig {
    let mut cfg = scenarios::formation(n, 0.0);
    cfg.script.clear();
    cfg.duration = duration;
    cfg
}

const FORMATION: &str = r#"{"kind":"command","v":1,"request":"a","commands":[{"kind":"formation","pattern":"vee","waypoints":[[0,1000],[3000,1000]]},{"kind":"set_pattern","pattern":"line"}]}"#;

#[tokio::test(flavor = "multi_thread")]
async fn first_message_is_a_snapshot_and_pushes_follow() {
    let server = start(airborne(3, 600.0), 10.0).await;
    let mut c = Client::connect(server.local_addr()).await;
    let t0 = std::time::Instant::now();
    let (_, first) = c.next().await;
    assert!(t0.elapsed() < Duration::from_millis(500));
    assert!(matches!(first, ServerMessage::Snapshot { .. }));
    let mut times = Vec::new();
    while times.len() < 3 {
        if let (_, ServerMessage::Snapshot { snapshot, .. }) = c.next().await {
            times.push(snapshot.time);
        }
    }
    assert!((times[2] - times[1] - 0.5).abs() < 1e-9, "{times:?}");
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn clients_receive_identical_snapshots() {
    let server = start(airborne(3, 600.0), 10.0).await;
    let mut a = Client::connect(server.local_addr()).await;
    let mut b = Client::connect(server.local_addr()).await;
    let is_snap = |m: &ServerMessage| matches!(m, ServerMessage::Snapshot { seq, .. } if *seq >= 3);
    let (la, ma) = a.until(is_snap).await;
    let ServerMessage::Snapshot { seq, .. } = ma else { unreachable!() };
    let (lb, _) = b.until(|m| matches!(m, ServerMessage::Snapshot { seq: s, .. } if *s == seq)).await;
    assert_eq!(la, lb);
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn malformed_line_gets_an_error_and_the_session_survives() {
    let server = start(airborne(3, 600.0), 10.0).await;
    let mut c = Client::connect(server.local_addr()).await;
    c.send("this is not json").await;
    c.until(|m| matches!(m, ServerMessage::Error { .. })).await;
    c.send(r#"{"kind":"command","v":9,"commands":[]}"#).await;
    let (_, e) = c.until(|m| matches!(m, ServerMessage::Error { .. })).await;
    assert!(matches!(e, ServerMessage::Error { message, .. } if message.contains("version")));
    c.send(FORMATION).await;
    c.until(|m| matches!(m, ServerMessage::WorkflowStatus { state: WorkflowState::Completed, .. })).await;
    c.until(|m| matches!(m, ServerMessage::Snapshot { .. })).await;
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn disconnect_pauses_workflow_until_a_client_returns() {
    let server = start(airborne(3, 600.0), 1.0).await;
    let mut watcher = Client::connect(server.local_addr()).await;
    let mut operator = Client::connect(server.local_addr()).await;
    operator.send(FORMATION).await;
    watcher
        .until(|m| matches!(m, ServerMessage::WorkflowStatus { request: Some(r), .. } if r == "a"))
        .await;
    drop(operator);
    let (_, paused) = watcher
        .until(|m| matches!(m, ServerMessage::WorkflowStatus { state, .. } if *state != WorkflowState::Queued && *state != WorkflowState::Running))
        .await;
    assert!(matches!(paused, ServerMessage::WorkflowStatus { state: WorkflowState::Paused, .. }), "{paused:?}");
    let _back = Client::connect(server.local_addr()).await;
    watcher
        .until(|m| matches!(m, ServerMessage::WorkflowStatus { state: WorkflowState::Completed, .. }))
        .await;
    server.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn shutdown_returns_the_simulation() {
    let server = start(airborne(2, 5.0), 0.0).await;
    let mut c = Client::connect(server.local_addr()).await;
    c.next().await;
    tokio::time::sleep(Duration::from_millis(200)).await;
    let sim = server.shutdown().await.unwrap();
    assert!(sim.is_finished());
}
