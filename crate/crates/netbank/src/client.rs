//! Wallet side of the wire protocol.
//!
//! [`WireLink`] implements [`BankLink`] over any [`Connector`]; every
//! conversation gets its own connection and a session id drawn from the
//! wallet's RNG.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use semiqm_core::protocol::{BankLink, Conversation, Msg, ProtocolError};

use crate::service::{BankService, Dispatcher};
use crate::wire::{self, SessionId, WireMessage};

fn transport(e: impl std::fmt::Display) -> ProtocolError {
    ProtocolError::Transport(e.to_string())
}

/// A bidirectional line stream.
pub trait LineChannel {
    fn send_line(&mut self, line: &str) -> Result<(), ProtocolError>;
    /// Next line without its terminator; `Transport` once the peer is gone.
    fn recv_line(&mut self) -> Result<String, ProtocolError>;
}

pub trait Connector {
    fn connect(&mut self) -> Result<Box<dyn LineChannel>, ProtocolError>;
}

impl<C: Connector + ?Sized> Connector for Box<C> {
    fn connect(&mut self) -> Result<Box<dyn LineChannel>, ProtocolError> {
        (**self).connect()
    }
}

pub struct TcpConnector {
    addr: SocketAddr,
    timeout: Duration,
}

impl TcpConnector {
    pub fn new(addr: SocketAddr) -> Self {
        Self {
            addr,
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

struct TcpChannel {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl LineChannel for TcpChannel {
    fn send_line(&mut self, line: &str) -> Result<(), ProtocolError> {
        self.writer.write_all(line.as_bytes()).map_err(transport)?;
        self.writer.write_all(b"\n").map_err(transport)?;
        self.writer.flush().map_err(transport)
    }

    fn recv_line(&mut self) -> Result<String, ProtocolError> {
        let mut line = String::new();
        let n = self.reader.read_line(&mut line).map_err(transport)?;
        if n == 0 || !line.ends_with('\n') {
            return Err(transport("connection closed by bank"));
        }
        line.pop();
        Ok(line)
    }
}

impl Connector for TcpConnector {
    fn connect(&mut self) -> Result<Box<dyn LineChannel>, ProtocolError> {
        let stream = TcpStream::connect_timeout(&self.addr, self.timeout).map_err(transport)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(transport)?;
        stream.set_nodelay(true).map_err(transport)?;
        let writer = stream.try_clone().map_err(transport)?;
        Ok(Box::new(TcpChannel {
            reader: BufReader::new(stream),
            writer,
        }))
    }
}

/// Shared record of every line sent or received, prefixed `> ` or `< `.
pub type WireLog = Arc<Mutex<Vec<String>>>;

/// In-process transport straight into a [`Dispatcher`].
pub struct LoopbackConnector {
    service: Arc<BankService>,
    log: Option<WireLog>,
}

impl LoopbackConnector {
    pub fn new(service: Arc<BankService>) -> Self {
        Self { service, log: None }
    }

    pub fn with_log(mut self, log: WireLog) -> Self {
        self.log = Some(log);
        self
    }
}

struct LoopbackChannel {
    dispatcher: Option<Dispatcher>,
    pending: VecDeque<String>,
    log: Option<WireLog>,
}

impl LoopbackChannel {
    fn record(&self, prefix: &str, line: &str) {
        if let Some(log) = &self.log {
            log.lock().expect("wire log").push(format!("{prefix}{line}"));
        }
    }
}

impl LineChannel for LoopbackChannel {
    fn send_line(&mut self, line: &str) -> Result<(), ProtocolError> {
        self.record("> ", line);
        let d = self
            .dispatcher
            .as_mut()
            .ok_or_else(|| transport("connection closed by bank"))?;
        let reply = d.handle_line(line);
        if let Some(out) = reply.line {
            self.pending.push_back(out);
        }
        if reply.close {
            self.dispatcher = None;
        }
        Ok(())
    }

    fn recv_line(&mut self) -> Result<String, ProtocolError> {
        let line = self
            .pending
            .pop_front()
            .ok_or_else(|| transport("connection closed by bank"))?;
        self.record("< ", &line);
        Ok(line)
    }
}

impl Connector for LoopbackConnector {
    fn connect(&mut self) -> Result<Box<dyn LineChannel>, ProtocolError> {
        Ok(Box::new(LoopbackChannel {
            dispatcher: Some(Dispatcher::new(self.service.clone())),
            pending: VecDeque::new(),
            log: self.log.clone(),
        }))
    }
}

pub struct WireLink<C> {
    connector: C,
    rng: ChaCha20Rng,
}

impl<C: Connector> WireLink<C> {
    /// `rng` chooses session ids.
    pub fn new(connector: C, rng: ChaCha20Rng) -> Self {
        Self { connector, rng }
    }

    pub fn from_entropy(connector: C) -> Self {
        Self::new(connector, ChaCha20Rng::from_entropy())
    }
}

struct WireConversation {
    channel: Box<dyn LineChannel>,
    session: SessionId,
    next_seq: u64,
    closed: bool,
}

impl Conversation for WireConversation {
    fn exchange(&mut self, msg: Msg) -> Result<Msg, ProtocolError> {
        if self.closed {
            return Err(ProtocolError::Finished);
        }
        let seq = self.next_seq;
        self.channel.send_line(&wire::encode(&WireMessage {
            session: self.session,
            seq,
            msg,
        }))?;
        let line = self.channel.recv_line()?;
        let reply = wire::decode(&line).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
        if reply.session != self.session {
            return Err(ProtocolError::Malformed(format!(
                "reply for session {}, expected {}",
                reply.session, self.session
            )));
        }
        if reply.seq != seq + 1 {
            return Err(ProtocolError::Malformed(format!(
                "reply seq {}, expected {}",
                reply.seq,
                seq + 1
            )));
        }
        self.next_seq = seq + 2;
        if matches!(reply.msg, Msg::Error { .. } | Msg::Result { .. }) {
            self.closed = true;
        }
        Ok(reply.msg)
    }
}

impl<C: Connector> BankLink for WireLink<C> {
    fn open(&mut self) -> Result<Box<dyn Conversation>, ProtocolError> {
        let channel = self.connector.connect()?;
        let session = SessionId(self.rng.gen());
        Ok(Box::new(WireConversation {
            channel,
            session,
            next_seq: 0,
            closed: false,
        }))
    }
}
