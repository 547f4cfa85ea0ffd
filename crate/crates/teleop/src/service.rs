//! Real-time service: one tick task owning the arm, network sessions
//! talking to it through an inbound command queue and an outbound state
//! broadcast.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State as AxumState;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use telearm_core::config::{ConfigError, ExperimentConfig};
use telearm_core::simkit::LatencyConfig;
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, watch};
use tokio::task::JoinHandle;
use tokio::time::{Instant, MissedTickBehavior};

use crate::sim::ArmSim;
use crate::wire::{parse_client_line, ClientMsg, ErrorCode, ErrorMsg, Hello, Role, ServerMsg};

/// Most ticks run in one wake-up when the loop falls behind; the rest are
/// dropped.
pub const MAX_CATCH_UP_TICKS: u64 = 5;

const STATE_BUFFER: usize = 64;
const SESSION_BUFFER: usize = 256;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    /// HTTP server with the `/teleop` web-socket endpoint.
    WebSocket,
    /// Bare TCP carrying newline-delimited JSON.
    Raw,
}

#[derive(Debug, Clone, Copy)]
pub struct ServeOptions {
    pub bind: SocketAddr,
    pub transport: Transport,
    /// Initial target latency.
    pub latency: LatencyConfig,
}

struct Shared {
    commands: mpsc::UnboundedSender<ClientMsg>,
    states: broadcast::Sender<Arc<str>>,
    operator: Mutex<Option<u64>>,
    next_session: AtomicU64,
    hello: Hello,
    shutdown: watch::Receiver<bool>,
}

/// Running service. Dropping the handle does not stop it; call
/// [`ServiceHandle::shutdown`].
pub struct ServiceHandle {
    pub local_addr: SocketAddr,
    stop: watch::Sender<bool>,
    server: JoinHandle<std::io::Result<()>>,
    ticker: JoinHandle<()>,
}

impl ServiceHandle {
    /// Resolves when the server stops on its own or after shutdown.
    pub async fn join(self) -> Result<(), ServeError> {
        let ServiceHandle {
            stop, server, ticker, ..
        } = self;
        let res = server.await.map_err(std::io::Error::other)?;
        let _ = stop.send(true);
        let _ = ticker.await;
        Ok(res?)
    }

    pub async fn shutdown(self) -> Result<(), ServeError> {
        let _ = self.stop.send(true);
        self.join().await
    }
}

/// Binds and starts the service in the background.
pub async fn spawn(cfg: &ExperimentConfig, opts: ServeOptions) -> Result<ServiceHandle, ServeError> {
    let arm = ArmSim::new(cfg, opts.latency)?;
    let listener = TcpListener::bind(opts.bind).await.map_err(|source| ServeError::Bind {
        addr: opts.bind,
        source,
    })?;
    let local_addr = listener.local_addr()?;

    let (stop, shutdown) = watch::channel(false);
    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
    let (state_tx, _) = broadcast::channel(STATE_BUFFER);
    let shared = Arc::new(Shared {
        commands: cmd_tx,
        states: state_tx.clone(),
        operator: Mutex::new(None),
        next_session: AtomicU64::new(0),
        hello: arm.hello(Role::Operator),
        shutdown: shutdown.clone(),
    });

    let ticker = tokio::spawn(tick_loop(arm, cmd_rx, state_tx, shutdown.clone()));
    let server = match opts.transport {
        Transport::WebSocket => {
            let app = Router::new().route("/teleop", get(ws_upgrade)).with_state(shared);
            let mut rx = shutdown;
            tokio::spawn(async move {
                axum::serve(listener, app)
                    .with_graceful_shutdown(async move {
                        stopped(&mut rx).await;
                    })
                    .await
            })
        }
        Transport::Raw => tokio::spawn(raw_accept(listener, shared)),
    };
    tracing::info!(%local_addr, transport = ?opts.transport, "teleop service listening");
    Ok(ServiceHandle {
        local_addr,
        stop,
        server,
        ticker,
    })
}

/// Runs the service until `shutdown` resolves.
pub async fn serve(
    cfg: &ExperimentConfig,
    opts: ServeOptions,
    shutdown: impl std::future::Future<Output = ()>,
) -> Result<(), ServeError> {
    let handle = spawn(cfg, opts).await?;
    shutdown.await;
    handle.shutdown().await
}

async fn tick_loop(
    mut arm: ArmSim,
    mut commands: mpsc::UnboundedReceiver<ClientMsg>,
    states: broadcast::Sender<Arc<str>>,
    mut shutdown: watch::Receiver<bool>,
) {
    let period = Duration::from_secs_f64(arm.dt_ctrl());
    let per_state = arm.ticks_per_state();
    let start = Instant::now();
    let mut interval = tokio::time::interval(period);
    interval.set_missed_tick_behavior(MissedTickBehavior::Skip);
    // Wall-clock tick index the simulation has caught up to, counting drops.
    let mut scheduled: u64 = 0;
    loop {
        tokio::select! {
            _ = interval.tick() => {}
            _ = shutdown.changed() => break,
        }
        let due = (start.elapsed().as_secs_f64() / arm.dt_ctrl()) as u64 + 1;
        let mut behind = due.saturating_sub(scheduled);
        if behind > MAX_CATCH_UP_TICKS {
            tracing::warn!(
                dropped = behind - MAX_CATCH_UP_TICKS,
                "tick loop behind, dropping ticks"
            );
            scheduled += behind - MAX_CATCH_UP_TICKS;
            behind = MAX_CATCH_UP_TICKS;
        }
        for _ in 0..behind {
            while let Ok(cmd) = commands.try_recv() {
                arm.submit(cmd);
            }
            arm.tick();
            scheduled += 1;
            if arm.ticks().is_multiple_of(per_state) {
                let line: Arc<str> = ServerMsg::State(Box::new(arm.snapshot())).to_line().into();
                let _ = states.send(line);
            }
        }
    }
}

impl Shared {
    fn claim(&self) -> (u64, Role) {
        let id = self.next_session.fetch_add(1, Ordering::Relaxed);
        let mut op = self.operator.lock().expect("operator lock");
        if op.is_none() {
            *op = Some(id);
            (id, Role::Operator)
        } else {
            (id, Role::Observer)
        }
    }

    fn release(&self, id: u64) {
        let mut op = self.operator.lock().expect("operator lock");
        if *op == Some(id) {
            *op = None;
        }
    }
}

/// Transport-independent session: `incoming` yields raw lines from the
/// peer, `outgoing` takes lines to send.
async fn session(shared: Arc<Shared>, mut incoming: mpsc::Receiver<String>, outgoing: mpsc::Sender<String>) {
    let (id, role) = shared.claim();
    tracing::info!(session = id, ?role, "session opened");
    let mut states = shared.states.subscribe();
    let mut shutdown = shared.shutdown.clone();
    let hello = ServerMsg::Hello(Hello {
        role,
        ..shared.hello.clone()
    });
    let mut last_t_ms = f64::NEG_INFINITY;
    if outgoing.send(hello.to_line()).await.is_ok() {
        loop {
            tokio::select! {
                line = incoming.recv() => {
                    let Some(line) = line else { break };
                    let line = line.trim();
                    if line.is_empty() {
                        continue;
                    }
                    if let Err(e) = handle_line(&shared, role, &mut last_t_ms, line) {
                        tracing::debug!(session = id, code = ?e.code, "rejected message");
                        if outgoing.send(ServerMsg::Error(e).to_line()).await.is_err() {
                            break;
                        }
                    }
                }
                state = states.recv() => match state {
                    Ok(line) => {
                        if outgoing.send(line.to_string()).await.is_err() {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        tracing::debug!(session = id, skipped = n, "slow client skipped states");
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                _ = stopped(&mut shutdown) => break,
            }
        }
    }
    shared.release(id);
    tracing::info!(session = id, "session closed");
}

fn handle_line(shared: &Shared, role: Role, last_t_ms: &mut f64, line: &str) -> Result<(), ErrorMsg> {
    let msg = parse_client_line(line)?;
    if role == Role::Observer {
        return Err(ErrorMsg::new(
            ErrorCode::Observer,
            "observer sessions cannot command the arm",
        ));
    }
    if let Some(t) = msg.t_ms() {
        if t < *last_t_ms {
            return Err(ErrorMsg::new(
                ErrorCode::NonMonotonic,
                format!("t_ms {t} is earlier than the previous {last_t_ms}"),
            ));
        }
        *last_t_ms = t;
    }
    shared
        .commands
        .send(msg)
        .map_err(|_| ErrorMsg::new(ErrorCode::Invalid, "service is shutting down"))
}

async fn ws_upgrade(ws: WebSocketUpgrade, AxumState(shared): AxumState<Arc<Shared>>) -> Response {
    ws.on_upgrade(move |socket| ws_session(socket, shared))
}

async fn ws_session(socket: WebSocket, shared: Arc<Shared>) {
    let (mut sink, mut stream) = socket.split();
    let (in_tx, in_rx) = mpsc::channel::<String>(SESSION_BUFFER);
    let (out_tx, mut out_rx) = mpsc::channel::<String>(SESSION_BUFFER);
    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = stream.next().await {
            let text = match msg {
                Message::Text(t) => t.to_string(),
                Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
                Message::Close(_) => break,
                _ => continue,
            };
            for line in text.lines() {
                if in_tx.send(line.to_string()).await.is_err() {
                    return;
                }
            }
        }
    });
    let writer = tokio::spawn(async move {
        while let Some(line) = out_rx.recv().await {
            if sink.send(Message::Text(line.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    session(shared, in_rx, out_tx).await;
    reader.abort();
    let _ = writer.await;
}

async fn raw_accept(listener: TcpListener, shared: Arc<Shared>) -> std::io::Result<()> {
    let mut shutdown = shared.shutdown.clone();
    loop {
        tokio::select! {
            accepted = listener.accept() => {
                let (stream, peer) = accepted?;
                tracing::debug!(%peer, "raw connection");
                tokio::spawn(raw_session(stream, shared.clone()));
            }
            _ = stopped(&mut shutdown) => return Ok(()),
        }
    }
}

async fn raw_session(stream: TcpStream, shared: Arc<Shared>) {
    let (read, mut write) = stream.into_split();
    let (in_tx, in_rx) = mpsc::channel::<String>(SESSION_BUFFER);
    let (out_tx, mut out_rx) = mpsc::channel::<String>(SESSION_BUFFER);
    let reader = tokio::spawn(async move {
        let mut lines = BufReader::new(read).lines();
        while let Ok(Some(line)) = lines.next_line().await {
            if in_tx.send(line).await.is_err() {
                return;
            }
        }
    });
    let writer = tokio::spawn(async move {
        while let Some(mut line) = out_rx.recv().await {
            line.push('\n');
            if write.write_all(line.as_bytes()).await.is_err() {
                break;
            }
        }
        let _ = write.shutdown().await;
    });
    session(shared, in_rx, out_tx).await;
    reader.abort();
    let _ = writer.await;
}

async fn stopped(rx: &mut watch::Receiver<bool>) {
    let _ = rx.wait_for(|s| *s).await;
}
