//! TCP transport: one task per client session, one thread owning the
//! simulation. Client commands reach the simulation through a single ordered
//! queue; telemetry is serialized once and fanned out to every session.

use crate::driver::{Driver, Outgoing, Route, SessionId};
use crate::protocol::{parse_client, ClientMessage, ServerMessage, MAX_LINE};
use fwswarm_core::sim::{SimError, Simulation};
use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::mpsc as std_mpsc;
use std::sync::Arc;
use std::time::{Duration, Instant};
use tokio::io::{AsyncBufRead, AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc};
use tokio::task::JoinHandle;

#[derive(Debug, Clone, Copy)]
pub struct ServeConfig {
    pub listen: SocketAddr,
    /// Snapshot pushes per simulated second.
    pub push_hz: f64,
    /// Simulated seconds per wall-clock second; 0 runs unpaced.
    pub speed: f64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 7878)),
            push_hz: 2.0,
            speed: 1.0,
        }
    }
}

enum Control {
    Connect(SessionId, mpsc::UnboundedSender<Arc<str>>),
    Disconnect(SessionId),
    Message(SessionId, ClientMessage),
    Shutdown,
}

pub struct Server {
    addr: SocketAddr,
    control: std_mpsc::Sender<Control>,
    accept: JoinHandle<()>,
    sim: std::thread::JoinHandle<Result<Simulation, SimError>>,
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Runs until the simulation thread stops on its own (it does not once
    /// all clients are served; use [`Server::shutdown`]).
    pub async fn wait(self) -> Result<Simulation, SimError> {
        let sim = self.sim;
        let out = tokio::task::spawn_blocking(move || sim.join().expect("simulation thread panicked"))
            .await
            .expect("join task");
        self.accept.abort();
        out
    }

    /// Stops accepting clients and the simulation, returning it.
    pub async fn shutdown(self) -> Result<Simulation, SimError> {
        let _ = self.control.send(Control::Shutdown);
        self.wait().await
    }
}

pub async fn serve(sim: Simulation, cfg: ServeConfig) -> io::Result<Server> {
    let listener = TcpListener::bind(cfg.listen).await?;
    let addr = listener.local_addr()?;
    let (control, rx) = std_mpsc::channel();
    let (btx, _) = broadcast::channel::<Arc<str>>(1024);
    let driver = Driver::new(sim, cfg.push_hz);
    let sim_btx = btx.clone();
    let speed = cfg.speed;
    let sim = std::thread::Builder::new()
        .name("fwswarm-sim".into())
        .spawn(move || sim_loop(driver, rx, sim_btx, speed))?;
    let accept_control = control.clone();
    let accept = tokio::spawn(async move {
        let mut next: SessionId = 1;
        while let Ok((stream, _)) = listener.accept().await {
            let id = next;
            next += 1;
            tokio::spawn(session(id, stream, btx.subscribe(), accept_control.clone()));
        }
    });
    Ok(Server {
        addr,
        control,
        accept,
        sim,
    })
}

fn sim_loop(
    mut driver: Driver,
    rx: std_mpsc::Receiver<Control>,
    btx: broadcast::Sender<Arc<str>>,
    speed: f64,
) -> Result<Simulation, SimError> {
    let mut sessions: HashMap<SessionId, mpsc::UnboundedSender<Arc<str>>> = HashMap::new();
    let start = Instant::now();
    let t0 = driver.sim().time();
    let route = |out: Vec<Outgoing>, sessions: &HashMap<SessionId, mpsc::UnboundedSender<Arc<str>>>| {
        for o in out {
            let line: Arc<str> = o.msg.to_line().into();
            match o.to {
                Route::All => {
                    let _ = btx.send(line);
                }
                Route::Session(s) => {
                    if let Some(tx) = sessions.get(&s) {
                        let _ = tx.send(line);
                    }
                }
            }
        }
    };
    loop {
        let ahead = if driver.is_finished() {
            0.1
        } else if speed > 0.0 {
            (driver.sim().time() - t0) / speed - start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let next = if ahead > 0.0 {
            match rx.recv_timeout(Duration::from_secs_f64(ahead.min(0.05))) {
                Ok(c) => Some(c),
                Err(std_mpsc::RecvTimeoutError::Timeout) => None,
                Err(std_mpsc::RecvTimeoutError::Disconnected) => break,
            }
        } else {
            rx.try_recv().ok()
        };
        if let Some(c) = next {
            let out = match c {
                Control::Connect(id, tx) => {
                    sessions.insert(id, tx);
                    driver.connect(id)
                }
                Control::Disconnect(id) => {
                    sessions.remove(&id);
                    driver.disconnect(id)
                }
                Control::Message(id, msg) => driver.handle(id, msg),
                Control::Shutdown => break,
            };
            route(out, &sessions);
            continue;
        }
        if ahead <= 0.0 || driver.is_finished() {
            let out = driver.step()?;
            route(out, &sessions);
        }
    }
    let mut sim = driver.into_sim();
    sim.flush_log()?;
    Ok(sim)
}

/// Reads one line of at most [`MAX_LINE`] bytes. `Ok(None)` at end of stream.
/// Longer lines are consumed and reported as `Err(InvalidData)`.
async fn read_line<R: AsyncBufRead + Unpin>(r: &mut R) -> io::Result<Option<String>> {
    let mut buf = Vec::new();
    let mut too_long = false;
    loop {
        let chunk = r.fill_buf().await?;
        if chunk.is_empty() {
            return if buf.is_empty() && !too_long { Ok(None) } else { finish(buf, too_long).map(Some) };
        }
        let (take, done) = match chunk.iter().position(|b| *b == b'\n') {
            Some(i) => (i + 1, true),
            None => (chunk.len(), false),
        };
        if !too_long {
            buf.extend_from_slice(&chunk[..take]);
            if buf.len() > MAX_LINE + 1 {
                too_long = true;
                buf.clear();
            }
        }
        r.consume(take);
        if done {
            return finish(buf, too_long).map(Some);
        }
    }
}

fn finish(mut buf: Vec<u8>, too_long: bool) -> io::Result<String> {
    if too_long {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "line too long"));
    }
    while buf.last().is_some_and(|b| *b == b'\n' || *b == b'\r') {
        buf.pop();
    }
    String::from_utf8(buf).map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "line is not UTF-8"))
}

async fn session(id: SessionId, stream: TcpStream, mut all: broadcast::Receiver<Arc<str>>, control: std_mpsc::Sender<Control>) {
    let _ = stream.set_nodelay(true);
    let (rd, mut wr) = stream.into_split();
    let (tx, mut direct) = mpsc::unbounded_channel::<Arc<str>>();
    if control.send(Control::Connect(id, tx.clone())).is_err() {
        return;
    }
    let reader_control = control.clone();
    let mut reader = tokio::spawn(async move {
        let mut rd = BufReader::new(rd);
        loop {
            let reply = match read_line(&mut rd).await {
                Ok(None) => break,
                Ok(Some(l)) if l.trim().is_empty() => continue,
                Ok(Some(l)) => match parse_client(&l) {
                    Ok(msg) => {
                        if reader_control.send(Control::Message(id, msg)).is_err() {
                            break;
                        }
                        continue;
                    }
                    Err(e) => ServerMessage::error(None, e.to_string()),
                },
                Err(e) if e.kind() == io::ErrorKind::InvalidData => ServerMessage::error(None, e.to_string()),
                Err(_) => break,
            };
            if tx.send(reply.to_line().into()).is_err() {
                break;
            }
        }
    });
    loop {
        let line: Arc<str> = tokio::select! {
            _ = &mut reader => break,
            msg = all.recv() => match msg {
                Ok(l) => l,
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => break,
            },
            Some(l) = direct.recv() => l,
        };
        if wr.write_all(line.as_bytes()).await.is_err() {
            break;
        }
    }
    reader.abort();
    let _ = control.send(Control::Disconnect(id));
}
