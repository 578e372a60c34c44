//! The referee: sits between a strategy and the bank, logs every session and
//! derives `(w, l, v)` from what the bank said.

use std::cell::RefCell;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use semiqm_core::money_public::Serial;
use semiqm_core::protocol::{BankLink, Conversation, Msg, MsgType, ProtocolError};

/// Randomness for trial `index` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionKind {
    Mint,
    Verify,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToBank,
    FromBank,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRecord {
    pub kind: SessionKind,
    pub messages: Vec<(Direction, MsgType)>,
    /// The bank's `RESULT`, if it sent one.
    pub accepted: Option<bool>,
    /// Serial named in a public-scheme spend.
    pub serial: Option<Serial>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    pub mints: usize,
    pub verifies: usize,
}

impl Caps {
    pub const UNLIMITED: Caps = Caps {
        mints: usize::MAX,
        verifies: usize::MAX,
    };
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ledger {
    pub caps: Caps,
    pub sessions: Vec<SessionRecord>,
    /// Set when the strategy tried to exceed a cap.
    pub void: bool,
}

impl Ledger {
    pub fn new(caps: Caps) -> Self {
        Self {
            caps,
            sessions: Vec::new(),
            void: false,
        }
    }

    fn count(&self, kind: SessionKind) -> usize {
        self.sessions.iter().filter(|s| s.kind == kind).count()
    }

    /// `l`: minting sessions opened.
    pub fn minted(&self) -> usize {
        self.count(SessionKind::Mint)
    }

    /// `v`: verification sessions opened.
    pub fn verified(&self) -> usize {
        self.count(SessionKind::Verify)
    }

    /// `w`: verification sessions the bank accepted.
    pub fn wins(&self) -> usize {
        self.sessions
            .iter()
            .filter(|s| s.kind == SessionKind::Verify && s.accepted == Some(true))
            .count()
    }
}

pub type SharedLedger = Rc<RefCell<Ledger>>;

/// Wraps a bank link so that every session passes through the ledger.
pub struct RefereedLink<L> {
    inner: L,
    ledger: SharedLedger,
}

impl<L: BankLink> RefereedLink<L> {
    pub fn new(inner: L, caps: Caps) -> Self {
        Self {
            inner,
            ledger: Rc::new(RefCell::new(Ledger::new(caps))),
        }
    }

    pub fn with_ledger(inner: L, ledger: SharedLedger) -> Self {
        Self { inner, ledger }
    }

    pub fn ledger(&self) -> SharedLedger {
        self.ledger.clone()
    }

    pub fn into_inner(self) -> L {
        self.inner
    }
}

struct RefereedConversation {
    inner: Box<dyn Conversation>,
    ledger: SharedLedger,
    index: Option<usize>,
}

impl Conversation for RefereedConversation {
    fn exchange(&mut self, msg: Msg) -> Result<Msg, ProtocolError> {
        let index = match self.index {
            Some(i) => i,
            None => {
                let mut ledger = self.ledger.borrow_mut();
                let kind = match msg.kind() {
                    MsgType::MintInit | MsgType::PMintSerial => SessionKind::Mint,
                    MsgType::VerifyInit | MsgType::PSpend => SessionKind::Verify,
                    _ => SessionKind::Other,
                };
                let over = match kind {
                    SessionKind::Mint => ledger.minted() >= ledger.caps.mints,
                    SessionKind::Verify => ledger.verified() >= ledger.caps.verifies,
                    SessionKind::Other => false,
                };
                if over {
                    ledger.void = true;
                    return Err(ProtocolError::Aborted("session cap exceeded".into()));
                }
                ledger.sessions.push(SessionRecord {
                    kind,
                    messages: Vec::new(),
                    accepted: None,
                    serial: None,
                });
                let i = ledger.sessions.len() - 1;
                self.index = Some(i);
                i
            }
        };
        {
            let mut ledger = self.ledger.borrow_mut();
            let record = &mut ledger.sessions[index];
            record.messages.push((Direction::ToBank, msg.kind()));
            if let Msg::PSpend { serial, .. } = &msg {
                record.serial = Some(*serial);
            }
        }
        let reply = self.inner.exchange(msg)?;
        let mut ledger = self.ledger.borrow_mut();
        let record = &mut ledger.sessions[index];
        record.messages.push((Direction::FromBank, reply.kind()));
        if let Msg::Result { accepted } = reply {
            record.accepted = Some(accepted);
        }
        Ok(reply)
    }
}

impl<L: BankLink> BankLink for RefereedLink<L> {
    fn open(&mut self) -> Result<Box<dyn Conversation>, ProtocolError> {
        Ok(Box::new(RefereedConversation {
            inner: self.inner.open()?,
            ledger: self.ledger.clone(),
            index: None,
        }))
    }
}
