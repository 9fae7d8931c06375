//! Point-to-point transports: ordered, reliable byte streams between named
//! nodes. Control messages travel as 4-byte length-prefixed JSON documents;
//! exchange frames travel raw (they are self-delimiting). The two are
//! distinguished by the frame magic in the first four bytes.

use std::collections::HashMap;
use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

use crate::error::{Error, Result};

use super::frame::{ExchangeFrame, FRAME_HEADER_LEN, FRAME_MAGIC};

/// The coordinator's reserved endpoint id.
pub const COORDINATOR_NODE: u16 = u16::MAX;

const MAX_CONTROL_LEN: u32 = 512 << 20;

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    /// JSON control document.
    Control(Vec<u8>),
    Frame(ExchangeFrame),
}

pub fn encode_message(msg: &WireMessage) -> Vec<u8> {
    match msg {
        WireMessage::Control(json) => {
            assert!((json.len() as u32) < MAX_CONTROL_LEN);
            let mut out = Vec::with_capacity(4 + json.len());
            out.extend_from_slice(&(json.len() as u32).to_le_bytes());
            out.extend_from_slice(json);
            out
        }
        WireMessage::Frame(f) => f.encode(),
    }
}

pub fn decode_message(bytes: &[u8]) -> Result<WireMessage> {
    if bytes.len() >= 4 && bytes[0..4] == FRAME_MAGIC {
        return Ok(WireMessage::Frame(ExchangeFrame::decode(bytes)?));
    }
    if bytes.len() < 4 {
        return Err(Error::Transport("short message".to_string()));
    }
    let len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    if bytes.len() != 4 + len {
        return Err(Error::Transport("control message length mismatch".to_string()));
    }
    Ok(WireMessage::Control(bytes[4..].to_vec()))
}

/// Read one message off a byte stream. Returns None at clean EOF.
pub fn read_message(r: &mut impl Read) -> Result<Option<WireMessage>> {
    let mut head = [0u8; 4];
    match r.read_exact(&mut head) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(Error::Transport(format!("read: {e}"))),
    }
    if head == FRAME_MAGIC {
        let mut rest = vec![0u8; FRAME_HEADER_LEN - 4];
        r.read_exact(&mut rest)
            .map_err(|e| Error::Transport(format!("read frame header: {e}")))?;
        let mut full = head.to_vec();
        full.extend_from_slice(&rest);
        let payload_len = u64::from_le_bytes(full[28..36].try_into().unwrap()) as usize;
        let mut payload = vec![0u8; payload_len];
        r.read_exact(&mut payload)
            .map_err(|e| Error::Transport(format!("read frame payload: {e}")))?;
        full.extend_from_slice(&payload);
        Ok(Some(WireMessage::Frame(ExchangeFrame::decode(&full)?)))
    } else {
        let len = u32::from_le_bytes(head);
        if len >= MAX_CONTROL_LEN {
            return Err(Error::Transport(format!("control message too large: {len}")));
        }
        let mut body = vec![0u8; len as usize];
        r.read_exact(&mut body)
            .map_err(|e| Error::Transport(format!("read control body: {e}")))?;
        Ok(Some(WireMessage::Control(body)))
    }
}

pub trait Transport: Send + Sync {
    fn node_id(&self) -> u16;
    fn send(&self, to: u16, msg: &WireMessage) -> Result<()>;
    /// Next inbound message, or None on timeout.
    fn recv_timeout(&self, timeout: Duration) -> Result<Option<(u16, WireMessage)>>;
}

// ---------------------------------------------------------------------------
// In-process loopback
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendRecord {
    pub from: u16,
    pub to: u16,
    pub is_frame: bool,
    pub exchange: Option<u32>,
}

/// Shared in-process fabric. Messages are encoded to bytes and decoded on
/// receipt so the loopback path exercises the same codec as TCP.
#[derive(Default)]
pub struct LoopbackFabric {
    inboxes: Mutex<HashMap<u16, mpsc::Sender<(u16, Vec<u8>)>>>,
    log: Mutex<Vec<SendRecord>>,
}

impl LoopbackFabric {
    pub fn new() -> Arc<LoopbackFabric> {
        Arc::new(LoopbackFabric::default())
    }

    pub fn endpoint(self: &Arc<Self>, id: u16) -> LoopbackEndpoint {
        let (tx, rx) = mpsc::channel();
        self.inboxes.lock().unwrap().insert(id, tx);
        LoopbackEndpoint {
            id,
            fabric: Arc::clone(self),
            rx: Mutex::new(rx),
        }
    }

    pub fn disconnect(&self, id: u16) {
        self.inboxes.lock().unwrap().remove(&id);
    }

    pub fn send_log(&self) -> Vec<SendRecord> {
        self.log.lock().unwrap().clone()
    }
}

pub struct LoopbackEndpoint {
    id: u16,
    fabric: Arc<LoopbackFabric>,
    rx: Mutex<mpsc::Receiver<(u16, Vec<u8>)>>,
}

impl Transport for LoopbackEndpoint {
    fn node_id(&self) -> u16 {
        self.id
    }

    fn send(&self, to: u16, msg: &WireMessage) -> Result<()> {
        let bytes = encode_message(msg);
        self.fabric.log.lock().unwrap().push(SendRecord {
            from: self.id,
            to,
            is_frame: matches!(msg, WireMessage::Frame(_)),
            exchange: match msg {
                WireMessage::Frame(f) => Some(f.exchange),
                WireMessage::Control(_) => None,
            },
        });
        let tx = {
            let inboxes = self.fabric.inboxes.lock().unwrap();
            inboxes
                .get(&to)
                .cloned()
                .ok_or_else(|| Error::Transport(format!("no route to node {to}")))?
        };
        tx.send((self.id, bytes))
            .map_err(|_| Error::Transport(format!("node {to} hung up")))
    }

    fn recv_timeout(&self, timeout: Duration) -> Result<Option<(u16, WireMessage)>> {
        let rx = self.rx.lock().unwrap();
        match rx.recv_timeout(timeout) {
            Ok((from, bytes)) => Ok(Some((from, decode_message(&bytes)?))),
            Err(mpsc::RecvTimeoutError::Timeout) => Ok(None),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("fabric disconnected".to_string()))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// TCP
// ---------------------------------------------------------------------------

/// TCP transport: one listener per node; outbound sockets dialed lazily from
/// an address book. The first message on every outbound socket is a hello
/// naming the dialer, so the acceptor can attribute inbound traffic.
pub struct TcpTransport {
    id: u16,
    addresses: Mutex<HashMap<u16, String>>,
    outbound: Mutex<HashMap<u16, Arc<Mutex<TcpStream>>>>,
    inbox_tx: mpsc::Sender<(u16, WireMessage)>,
    inbox_rx: Mutex<mpsc::Receiver<(u16, WireMessage)>>,
    shutdown: Arc<AtomicBool>,
    pub local_addr: String,
}

impl TcpTransport {
    pub fn bind(id: u16, addr: &str) -> Result<Arc<TcpTransport>> {
        let listener = TcpListener::bind(addr).map_err(|e| Error::Bind {
            addr: addr.to_string(),
            message: e.to_string(),
        })?;
        let local_addr = listener.local_addr()?.to_string();
        let (tx, rx) = mpsc::channel();
        let transport = Arc::new(TcpTransport {
            id,
            addresses: Mutex::new(HashMap::new()),
            outbound: Mutex::new(HashMap::new()),
            inbox_tx: tx,
            inbox_rx: Mutex::new(rx),
            shutdown: Arc::new(AtomicBool::new(false)),
            local_addr,
        });
        let accept_tx = transport.inbox_tx.clone();
        let shutdown = Arc::clone(&transport.shutdown);
        listener.set_nonblocking(true).ok();
        std::thread::spawn(move || {
            while !shutdown.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        stream.set_nonblocking(false).ok();
                        let tx = accept_tx.clone();
                        let stop = Arc::clone(&shutdown);
                        std::thread::spawn(move || reader_loop(stream, tx, stop));
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(10));
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(transport)
    }

    pub fn set_address(&self, node: u16, addr: &str) {
        self.addresses.lock().unwrap().insert(node, addr.to_string());
    }

    pub fn stop(&self) {
        self.shutdown.store(true, Ordering::SeqCst);
    }

    fn socket_to(&self, to: u16) -> Result<Arc<Mutex<TcpStream>>> {
        if let Some(s) = self.outbound.lock().unwrap().get(&to) {
            return Ok(Arc::clone(s));
        }
        let addr = self
            .addresses
            .lock()
            .unwrap()
            .get(&to)
            .cloned()
            .ok_or_else(|| Error::Transport(format!("no address for node {to}")))?;
        let stream = TcpStream::connect(&addr)
            .map_err(|e| Error::Transport(format!("connect {addr}: {e}")))?;
        stream.set_nodelay(true).ok();
        // Identify ourselves so the peer can attribute this stream.
        let hello = format!("{{\"msg\":\"Hello\",\"node\":{}}}", self.id);
        let mut s = stream;
        s.write_all(&encode_message(&WireMessage::Control(hello.into_bytes())))
            .map_err(|e| Error::Transport(format!("hello: {e}")))?;
        let shared = Arc::new(Mutex::new(s));
        self.outbound.lock().unwrap().insert(to, Arc::clone(&shared));
        Ok(shared)
    }
}

fn reader_loop(
    mut stream: TcpStream,
    tx: mpsc::Sender<(u16, WireMessage)>,
    shutdown: Arc<AtomicBool>,
) {
    // First message must be the hello.
    let peer = match read_message(&mut stream) {
        Ok(Some(WireMessage::Control(json))) => {
            match serde_json::from_slice::<serde_json::Value>(&json) {
                Ok(v) if v["msg"] == "Hello" => v["node"].as_u64().unwrap_or(0) as u16,
                _ => return,
            }
        }
        _ => return,
    };
    while !shutdown.load(Ordering::SeqCst) {
        match read_message(&mut stream) {
            Ok(Some(msg)) => {
                if tx.send((peer, msg)).is_err() {
                    return;
                }
            }
            Ok(None) => return,
            Err(_) => return,
        }
    }
}

impl Transport for TcpTransport {
    fn node_id(&self) -> u16 {
        self.id
    }

    fn send(&self, to: u16, msg: &WireMessage) -> Result<()> {
        let sock = self.socket_to(to)?;
        let bytes = encode_message(msg);
        let mut s = sock.lock().unwrap();
        s.write_all(&bytes).map_err(|e| {
            Error::Transport(format!("send to {to}: {e}"))
        })
    }

    fn recv_timeout(&self, timeout: Duration) -> Result<Option<(u16, WireMessage)>> {
        let rx = self.inbox_rx.lock().unwrap();
        match rx.recv_timeout(timeout) {
            Ok(pair) => Ok(Some(pair)),
            Err(mpsc::RecvTimeoutError::Timeout) => Ok(None),
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("inbox closed".to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loopback_round_trip_through_codec() {
        let fabric = LoopbackFabric::new();
        let a = fabric.endpoint(0);
        let b = fabric.endpoint(1);
        a.send(1, &WireMessage::Control(b"{\"x\":1}".to_vec())).unwrap();
        let f = ExchangeFrame::data(1, 2, 0, 0, 0, vec![5, 6]);
        a.send(1, &WireMessage::Frame(f.clone())).unwrap();
        let (from, m1) = b.recv_timeout(Duration::from_secs(1)).unwrap().unwrap();
        assert_eq!(from, 0);
        assert_eq!(m1, WireMessage::Control(b"{\"x\":1}".to_vec()));
        let (_, m2) = b.recv_timeout(Duration::from_secs(1)).unwrap().unwrap();
        assert_eq!(m2, WireMessage::Frame(f));
    }

    #[test]
    fn tcp_round_trip() {
        let a = TcpTransport::bind(0, "127.0.0.1:0").unwrap();
        let b = TcpTransport::bind(1, "127.0.0.1:0").unwrap();
        a.set_address(1, &b.local_addr);
        let frame = ExchangeFrame::data(9, 4, 0, 1, 0, vec![1, 2, 3, 4]);
        a.send(1, &WireMessage::Frame(frame.clone())).unwrap();
        a.send(1, &WireMessage::Control(b"{\"msg\":\"Status\",\"node\":0}".to_vec()))
            .unwrap();
        let (from, m1) = b.recv_timeout(Duration::from_secs(5)).unwrap().unwrap();
        assert_eq!(from, 0);
        assert_eq!(m1, WireMessage::Frame(frame));
        let (_, m2) = b.recv_timeout(Duration::from_secs(5)).unwrap().unwrap();
        assert!(matches!(m2, WireMessage::Control(_)));
        a.stop();
        b.stop();
    }
}
