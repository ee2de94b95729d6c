//! Network front end: newline-delimited JSON over TCP, the same envelopes
//! over a WebSocket bridge for browsers, and the scheduler ticker.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver, UnboundedSender};

use otterlink_core::{Clock, UserId};

use crate::service::{Connection, Outgoing, Service};
use crate::state::Push;

type ConnId = u64;

#[derive(Default)]
struct HubInner {
    online: HashMap<UserId, Vec<(ConnId, UnboundedSender<Outgoing>)>>,
    offline: HashMap<UserId, VecDeque<Outgoing>>,
}

/// Routes pushes to every live connection of a user, or buffers them while
/// the user is offline.
pub struct Hub {
    inner: Mutex<HubInner>,
    offline_cap: usize,
}

impl Hub {
    pub fn new(offline_cap: usize) -> Self {
        Hub {
            inner: Mutex::new(HubInner::default()),
            offline_cap,
        }
    }

    pub fn attach(&self, user: UserId, conn: ConnId, tx: UnboundedSender<Outgoing>) {
        let mut inner = self.inner.lock().expect("hub lock");
        for held in inner.offline.remove(&user).unwrap_or_default() {
            let _ = tx.send(held);
        }
        let conns = inner.online.entry(user).or_default();
        conns.retain(|(id, _)| *id != conn);
        conns.push((conn, tx));
    }

    pub fn detach(&self, conn: ConnId) {
        let mut inner = self.inner.lock().expect("hub lock");
        for conns in inner.online.values_mut() {
            conns.retain(|(id, _)| *id != conn);
        }
        inner.online.retain(|_, c| !c.is_empty());
    }

    pub fn deliver(&self, to: UserId, out: Outgoing) {
        let mut inner = self.inner.lock().expect("hub lock");
        if let Some(conns) = inner.online.get_mut(&to) {
            conns.retain(|(_, tx)| tx.send(out.clone()).is_ok());
            if !conns.is_empty() {
                return;
            }
            inner.online.remove(&to);
        }
        let queue = inner.offline.entry(to).or_default();
        if queue.len() >= self.offline_cap {
            queue.pop_front();
        }
        queue.push_back(out);
    }

    pub fn offline_len(&self, user: UserId) -> usize {
        let inner = self.inner.lock().expect("hub lock");
        inner.offline.get(&user).map_or(0, VecDeque::len)
    }
}

/// State shared by every connection task.
pub struct Shared {
    pub service: Mutex<Service>,
    pub hub: Hub,
    pub clock: Arc<dyn Clock>,
    next_conn: AtomicU64,
}

impl Shared {
    pub fn new(service: Service, clock: Arc<dyn Clock>) -> Arc<Self> {
        let cap = service.config().offline_buffer;
        Arc::new(Shared {
            service: Mutex::new(service),
            hub: Hub::new(cap),
            clock,
            next_conn: AtomicU64::new(1),
        })
    }

    fn fan_out(&self, pushes: &[Push]) {
        for p in pushes {
            self.hub.deliver(p.to, Outgoing::from(p));
        }
    }

    /// Handles one inbound line and queues the reply and any pushes. The
    /// service lock is held across delivery so each recipient sees events in
    /// commit order.
    fn process(&self, conn_id: ConnId, conn: &mut Connection, tx: &UnboundedSender<Outgoing>, line: &str) {
        let mut service = self.service.lock().expect("service lock");
        let dispatch = service.handle_line(conn, line, self.clock.now());
        if let Some(user) = dispatch.bound {
            self.hub.attach(user, conn_id, tx.clone());
        }
        let _ = tx.send(dispatch.reply);
        self.fan_out(&dispatch.pushes);
    }

    pub fn tick(&self) {
        let mut service = self.service.lock().expect("service lock");
        match service.tick(self.clock.now()) {
            Ok(pushes) => self.fan_out(&pushes),
            Err(e) => log::error!("tick failed: {e}"),
        }
    }

    fn open_connection(&self) -> (ConnId, UnboundedSender<Outgoing>, UnboundedReceiver<Outgoing>) {
        let id = self.next_conn.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = unbounded_channel();
        (id, tx, rx)
    }
}

pub async fn run_tcp(listener: TcpListener, shared: Arc<Shared>) -> std::io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let shared = shared.clone();
        tokio::spawn(async move {
            if let Err(e) = tcp_connection(stream, shared).await {
                log::debug!("connection {peer} closed: {e}");
            }
        });
    }
}

async fn tcp_connection(stream: TcpStream, shared: Arc<Shared>) -> std::io::Result<()> {
    let (read, mut write) = stream.into_split();
    let (conn_id, tx, mut rx) = shared.open_connection();
    let writer = tokio::spawn(async move {
        let mut seq = 0u64;
        while let Some(out) = rx.recv().await {
            seq += 1;
            let mut line = out.into_envelope(seq).to_line();
            line.push('\n');
            if write.write_all(line.as_bytes()).await.is_err() {
                break;
            }
        }
    });
    let mut conn = Connection::default();
    let mut lines = BufReader::new(read).lines();
    let result = loop {
        match lines.next_line().await {
            Ok(Some(line)) if line.trim().is_empty() => continue,
            Ok(Some(line)) => shared.process(conn_id, &mut conn, &tx, &line),
            Ok(None) => break Ok(()),
            Err(e) => break Err(e),
        }
    };
    shared.hub.detach(conn_id);
    drop(tx);
    let _ = writer.await;
    result
}

/// Browser bridge: `GET /ws` upgrades to a WebSocket where each text frame is
/// one envelope.
pub fn ws_router(shared: Arc<Shared>) -> Router {
    Router::new().route("/ws", get(ws_upgrade)).with_state(shared)
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| ws_connection(socket, shared))
}

async fn ws_connection(socket: WebSocket, shared: Arc<Shared>) {
    let (mut sink, mut stream) = socket.split();
    let (conn_id, tx, mut rx) = shared.open_connection();
    let writer = tokio::spawn(async move {
        let mut seq = 0u64;
        while let Some(out) = rx.recv().await {
            seq += 1;
            if sink
                .send(Message::Text(out.into_envelope(seq).to_line()))
                .await
                .is_err()
            {
                break;
            }
        }
    });
    let mut conn = Connection::default();
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(text) => {
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    shared.process(conn_id, &mut conn, &tx, line);
                }
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    shared.hub.detach(conn_id);
    drop(tx);
    let _ = writer.await;
}

pub async fn run_ws(listener: TcpListener, shared: Arc<Shared>) -> std::io::Result<()> {
    axum::serve(listener, ws_router(shared)).await
}

pub async fn run_ticker(shared: Arc<Shared>, period: Duration) {
    let mut interval = tokio::time::interval(period);
    loop {
        interval.tick().await;
        shared.tick();
    }
}

/// Binds both listeners and runs until one of them fails.
pub async fn serve(shared: Arc<Shared>, tcp: SocketAddr, ws: Option<SocketAddr>) -> std::io::Result<()> {
    let period = Duration::from_secs(shared.service.lock().expect("service lock").config().tick_secs.max(1));
    let tcp = TcpListener::bind(tcp).await?;
    log::info!("protocol listening on {}", tcp.local_addr()?);
    tokio::spawn(run_ticker(shared.clone(), period));
    match ws {
        Some(addr) => {
            let ws = TcpListener::bind(addr).await?;
            log::info!("websocket bridge on ws://{}/ws", ws.local_addr()?);
            tokio::select! {
                r = run_tcp(tcp, shared.clone()) => r,
                r = run_ws(ws, shared) => r,
            }
        }
        None => run_tcp(tcp, shared).await,
    }
}
