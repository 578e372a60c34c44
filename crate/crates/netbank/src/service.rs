//! The bank as a network service.
//!
//! A [`Dispatcher`] turns request lines into reply lines for one
//! connection; the TCP server runs one per connection thread, the loopback
//! transport one per in-process connection. Sessions are keyed by the
//! client-chosen id and dropped as soon as they finish, abort or time out.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use semiqm_core::money_private::{BankSession, PrivateBank};
use semiqm_core::money_public::PublicBank;
use semiqm_core::protocol::{Msg, MsgType, ProtocolError};

use crate::wire::{self, SessionId, WireError, WireMessage};

pub const DEFAULT_SESSION_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceConfig {
    pub session_timeout: Duration,
    /// Derive every session's randomness from this seed and the session id.
    /// Without it sessions draw from the OS.
    pub seed: Option<u64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            session_timeout: DEFAULT_SESSION_TIMEOUT,
            seed: None,
        }
    }
}

/// Shared, immutable bank state plus a live-session gauge.
#[derive(Debug)]
pub struct BankService {
    private: Option<Arc<PrivateBank>>,
    public: Option<Arc<PublicBank>>,
    config: ServiceConfig,
    live: AtomicUsize,
}

impl BankService {
    pub fn new(
        private: Option<Arc<PrivateBank>>,
        public: Option<Arc<PublicBank>>,
        config: ServiceConfig,
    ) -> Self {
        Self {
            private,
            public,
            config,
            live: AtomicUsize::new(0),
        }
    }

    pub fn private(&self) -> Option<&Arc<PrivateBank>> {
        self.private.as_ref()
    }

    pub fn public(&self) -> Option<&Arc<PublicBank>> {
        self.public.as_ref()
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    /// Sessions opened and not yet finished, aborted or expired.
    pub fn live_sessions(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }

    fn session_rng(&self, id: &SessionId) -> ChaCha20Rng {
        match self.config.seed {
            Some(seed) => {
                let mut h = Sha256::new();
                h.update(b"semiqm-session");
                h.update(seed.to_be_bytes());
                h.update(id.0);
                ChaCha20Rng::from_seed(h.finalize().into())
            }
            None => ChaCha20Rng::from_entropy(),
        }
    }
}

enum SessionState {
    Private(BankSession),
    Public,
}

struct Entry {
    state: SessionState,
    last_seq: u64,
    touched: Instant,
}

/// What to do after one request line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub line: Option<String>,
    pub close: bool,
}

/// Per-connection session table.
pub struct Dispatcher {
    service: Arc<BankService>,
    sessions: HashMap<SessionId, Entry>,
}

impl Dispatcher {
    pub fn new(service: Arc<BankService>) -> Self {
        Self {
            service,
            sessions: HashMap::new(),
        }
    }

    pub fn open_sessions(&self) -> usize {
        self.sessions.len()
    }

    fn insert(&mut self, id: SessionId, entry: Entry) {
        if self.sessions.insert(id, entry).is_none() {
            self.service.live.fetch_add(1, Ordering::SeqCst);
        }
    }

    fn remove(&mut self, id: &SessionId) {
        if self.sessions.remove(id).is_some() {
            self.service.live.fetch_sub(1, Ordering::SeqCst);
        }
    }

    /// Drops sessions idle for longer than the configured timeout.
    pub fn expire(&mut self, now: Instant) {
        let timeout = self.service.config.session_timeout;
        let stale: Vec<SessionId> = self
            .sessions
            .iter()
            .filter(|(_, e)| now.duration_since(e.touched) > timeout)
            .map(|(id, _)| *id)
            .collect();
        for id in stale {
            self.remove(&id);
        }
    }

    fn error(&mut self, session: SessionId, seq: u64, reason: String, close: bool) -> Reply {
        self.remove(&session);
        let line = wire::encode(&WireMessage {
            session,
            seq: seq.saturating_add(1),
            msg: Msg::Error { reason },
        });
        Reply {
            line: Some(line),
            close,
        }
    }

    pub fn handle_line(&mut self, line: &str) -> Reply {
        let now = Instant::now();
        self.expire(now);
        let m = match wire::decode(line) {
            Ok(m) => m,
            Err(WireError::UnknownType { session, seq, name }) => {
                return self.error(session, seq, format!("unknown message type {name}"), false)
            }
            Err(e) => {
                return match wire::peek_header(line) {
                    Some((session, seq)) => self.error(session, seq, e.to_string(), false),
                    None => self.error(SessionId([0; 16]), 0, e.to_string(), true),
                }
            }
        };
        let WireMessage { session, seq, msg } = m;

        if let Some(entry) = self.sessions.get(&session) {
            if seq <= entry.last_seq {
                return self.error(session, seq, "sequence number not increasing".into(), false);
            }
        } else {
            let state = match msg.kind() {
                MsgType::MintInit | MsgType::VerifyInit if self.service.private.is_some() => {
                    SessionState::Private(BankSession::new(self.service.session_rng(&session)))
                }
                MsgType::PMintSerial | MsgType::PSpend if self.service.public.is_some() => {
                    SessionState::Public
                }
                other => {
                    return self.error(session, seq, format!("cannot open a session with {other}"), false)
                }
            };
            self.insert(
                session,
                Entry {
                    state,
                    last_seq: seq,
                    touched: now,
                },
            );
        }

        let entry = self.sessions.get_mut(&session).expect("session present");
        let (result, finished) = match &mut entry.state {
            SessionState::Private(s) => {
                let bank = self.service.private.as_ref().expect("private bank");
                let r = bank.handle(s, msg);
                (r, s.is_finished())
            }
            SessionState::Public => {
                let bank = self.service.public.as_ref().expect("public bank");
                (bank.handle(msg), true)
            }
        };
        match result {
            Ok(reply) => {
                let reply_seq = seq + 1;
                entry.last_seq = reply_seq;
                entry.touched = now;
                if finished {
                    self.remove(&session);
                }
                Reply {
                    line: Some(wire::encode(&WireMessage {
                        session,
                        seq: reply_seq,
                        msg: reply,
                    })),
                    close: false,
                }
            }
            // fail closed: no verdict leaves the bank
            Err(ProtocolError::Storage(_)) => {
                self.remove(&session);
                Reply {
                    line: None,
                    close: true,
                }
            }
            Err(e) => self.error(session, seq, e.to_string(), false),
        }
    }
}

impl Drop for Dispatcher {
    fn drop(&mut self) {
        let n = self.sessions.len();
        self.service.live.fetch_sub(n, Ordering::SeqCst);
    }
}

fn serve_connection(stream: TcpStream, service: Arc<BankService>, stop: Arc<AtomicBool>) -> io::Result<()> {
    let timeout = service.config.session_timeout;
    let poll = timeout.min(Duration::from_millis(200)).max(Duration::from_millis(1));
    stream.set_read_timeout(Some(poll))?;
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut dispatcher = Dispatcher::new(service);
    let mut line = String::new();
    let mut idle_since = Instant::now();
    loop {
        if stop.load(Ordering::SeqCst) {
            return Ok(());
        }
        match reader.read_line(&mut line) {
            Ok(0) => return Ok(()),
            Ok(_) if !line.ends_with('\n') => continue,
            Ok(_) => {
                let reply = dispatcher.handle_line(&line);
                line.clear();
                idle_since = Instant::now();
                if let Some(out) = reply.line {
                    writer.write_all(out.as_bytes())?;
                    writer.write_all(b"\n")?;
                    writer.flush()?;
                }
                if reply.close {
                    return Ok(());
                }
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                dispatcher.expire(Instant::now());
                if dispatcher.open_sessions() == 0 && idle_since.elapsed() > timeout {
                    return Ok(());
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// A running TCP server.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    workers: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, closes every connection and waits for the threads.
    pub fn stop(mut self) {
        self.shutdown();
    }

    /// Blocks until the server stops (it only stops through [`ServerHandle::stop`]
    /// from another handle, so in practice this runs forever).
    pub fn join(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        let workers = std::mem::take(&mut *self.workers.lock().expect("worker list"));
        for w in workers {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.shutdown();
        }
    }
}

/// Binds `addr` and serves in background threads, one per connection.
pub fn spawn_server(addr: impl ToSocketAddrs, service: Arc<BankService>) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let workers: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::new(Mutex::new(Vec::new()));
    let acceptor = {
        let stop = stop.clone();
        let workers = workers.clone();
        std::thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        if stream.set_nonblocking(false).is_err() {
                            continue;
                        }
                        let service = service.clone();
                        let stop = stop.clone();
                        let h = std::thread::spawn(move || {
                            let _ = serve_connection(stream, service, stop);
                        });
                        let mut list = workers.lock().expect("worker list");
                        list.retain(|h| !h.is_finished());
                        list.push(h);
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(5));
                    }
                    Err(_) => std::thread::sleep(Duration::from_millis(5)),
                }
            }
        })
    };
    Ok(ServerHandle {
        addr,
        stop,
        acceptor: Some(acceptor),
        workers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use semiqm_core::money_private::{full_keygen, Params};

    fn service(timeout: Duration) -> Arc<BankService> {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let params = Params::new(16).unwrap().with_n(4).unwrap().with_w(10).unwrap();
        let bank = PrivateBank::full(full_keygen(&mut rng), params);
        Arc::new(BankService::new(
            Some(Arc::new(bank)),
            None,
            ServiceConfig {
                session_timeout: timeout,
                seed: Some(9),
            },
        ))
    }

    fn line(session: u8, seq: u64, msg: Msg) -> String {
        wire::encode(&WireMessage {
            session: SessionId([session; 16]),
            seq,
            msg,
        })
    }

    #[test]
    fn replies_carry_next_sequence_number() {
        let svc = service(DEFAULT_SESSION_TIMEOUT);
        let mut d = Dispatcher::new(svc.clone());
        let r = d.handle_line(&line(1, 0, Msg::MintInit));
        let reply = wire::decode(r.line.as_deref().unwrap()).unwrap();
        assert_eq!(reply.seq, 1);
        assert_eq!(reply.msg.kind(), MsgType::Puzzles);
        assert_eq!(svc.live_sessions(), 1);
        // a replayed sequence number aborts the session
        let r = d.handle_line(&line(1, 1, Msg::MintInit));
        let reply = wire::decode(r.line.as_deref().unwrap()).unwrap();
        assert_eq!(reply.msg.kind(), MsgType::Error);
        assert_eq!(svc.live_sessions(), 0);
    }

    #[test]
    fn unknown_type_aborts_the_session_only() {
        let svc = service(DEFAULT_SESSION_TIMEOUT);
        let mut d = Dispatcher::new(svc.clone());
        d.handle_line(&line(1, 0, Msg::MintInit));
        d.handle_line(&line(2, 0, Msg::MintInit));
        let bogus = line(1, 2, Msg::Result { accepted: true }).replace("RESULT", "REFUND");
        let r = d.handle_line(&bogus);
        assert!(!r.close);
        let reply = wire::decode(r.line.as_deref().unwrap()).unwrap();
        assert_eq!(reply.msg.kind(), MsgType::Error);
        assert_eq!(reply.session, SessionId([1; 16]));
        assert_eq!(svc.live_sessions(), 1);
        let r = d.handle_line("not json");
        assert!(r.close);
    }

    #[test]
    fn idle_sessions_expire() {
        let svc = service(Duration::from_millis(1));
        let mut d = Dispatcher::new(svc.clone());
        d.handle_line(&line(1, 0, Msg::VerifyInit { wrapped: None }));
        d.handle_line(&line(2, 0, Msg::MintInit));
        std::thread::sleep(Duration::from_millis(20));
        d.expire(Instant::now());
        assert_eq!(svc.live_sessions(), 0);
    }

    #[test]
    fn public_messages_need_a_public_bank() {
        let svc = service(DEFAULT_SESSION_TIMEOUT);
        let mut d = Dispatcher::new(svc.clone());
        let r = d.handle_line(&line(
            1,
            0,
            Msg::PMintSerial {
                serial: semiqm_core::money_public::Serial([0; 32]),
            },
        ));
        let reply = wire::decode(r.line.as_deref().unwrap()).unwrap();
        assert_eq!(reply.msg.kind(), MsgType::Error);
        assert_eq!(svc.live_sessions(), 0);
    }

    #[test]
    fn dropping_a_connection_releases_its_sessions() {
        let svc = service(DEFAULT_SESSION_TIMEOUT);
        {
            let mut d = Dispatcher::new(svc.clone());
            d.handle_line(&line(1, 0, Msg::MintInit));
            assert_eq!(svc.live_sessions(), 1);
        }
        assert_eq!(svc.live_sessions(), 0);
    }
}
