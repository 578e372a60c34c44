//! Bank side of the private schemes.
//!
//! [`PrivateBank`] is immutable: its key and parameters. Everything a session
//! needs between its two round trips lives in a [`BankSession`] owned by the
//! caller and dropped when the session ends.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{encode_obligations, mini_keygen, FullKey, MiniKey, Params, WrappedKey};
use crate::primitives::{decrypt, encode_fields, encrypt, mac_tag, mac_verify, Tag};
use crate::protocol::{BankLink, Conversation, Msg, ProtocolError};
use crate::puzzles::{self, Answer, Obligation};

#[derive(Debug, Clone, PartialEq, Eq)]
enum BankKey {
    Mini(MiniKey),
    Full(FullKey),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivateBank {
    key: BankKey,
    params: Params,
}

/// Per-session scratch state. A full-scheme session owns the mini key it
/// unwrapped or generated; a mini-scheme session borrows the bank's.
#[derive(Debug)]
enum SessionState {
    Fresh,
    AwaitObligations {
        key: Option<MiniKey>,
        wrapped: Option<WrappedKey>,
    },
    AwaitAnswers {
        key: Option<MiniKey>,
        challenge: Vec<bool>,
    },
    Finished,
}

#[derive(Debug)]
pub struct BankSession {
    rng: ChaCha20Rng,
    state: SessionState,
}

impl BankSession {
    pub fn new(rng: ChaCha20Rng) -> Self {
        Self {
            rng,
            state: SessionState::Fresh,
        }
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.state, SessionState::Finished)
    }
}

impl PrivateBank {
    /// A mini-scheme bank: one fixed mini key for every note.
    pub fn mini(key: MiniKey, params: Params) -> Self {
        Self {
            key: BankKey::Mini(key),
            params,
        }
    }

    /// A full-scheme bank: a fresh mini key per note, wrapped under `key`.
    pub fn full(key: FullKey, params: Params) -> Self {
        Self {
            key: BankKey::Full(key),
            params,
        }
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Everything the bank holds, serialized. Equal snapshots mean equal
    /// banks.
    pub fn snapshot(&self) -> Vec<u8> {
        let key_bytes = match &self.key {
            BankKey::Mini(k) => [b"mini".to_vec(), k.to_bytes()].concat(),
            BankKey::Full(k) => [
                b"full".to_vec(),
                k.mac_key.as_bytes().to_vec(),
                k.enc_key.as_bytes().to_vec(),
            ]
            .concat(),
        };
        encode_fields(&[
            key_bytes,
            self.params.lambda.to_be_bytes().to_vec(),
            (self.params.n as u64).to_be_bytes().to_vec(),
            (self.params.w as u64).to_be_bytes().to_vec(),
        ])
    }

    fn session_key<'a>(&'a self, owned: &'a Option<MiniKey>) -> &'a MiniKey {
        match (&self.key, owned) {
            (_, Some(k)) => k,
            (BankKey::Mini(k), None) => k,
            (BankKey::Full(_), None) => unreachable!("full-scheme sessions own their mini key"),
        }
    }

    /// Advances `session` by one client message and returns the reply.
    ///
    /// An `Err` aborts the session; the transport reports it to the client
    /// as an `ERROR` message.
    pub fn handle(&self, session: &mut BankSession, msg: Msg) -> Result<Msg, ProtocolError> {
        let state = std::mem::replace(&mut session.state, SessionState::Finished);
        match (state, msg) {
            (_, Msg::Error { reason }) => Err(ProtocolError::Aborted(reason)),
            (SessionState::Fresh, Msg::MintInit) => {
                let (key, wrapped) = match &self.key {
                    BankKey::Mini(_) => (None, None),
                    BankKey::Full(fk) => {
                        let mini = mini_keygen(&self.params, &mut session.rng)
                            .map_err(|e| ProtocolError::Malformed(e.to_string()))?;
                        let ciphertext = encrypt(&fk.enc_key, &mini.to_bytes(), &mut session.rng);
                        let tag = mac_tag(&fk.mac_key, &ciphertext.to_bytes());
                        (Some(mini), Some(WrappedKey { ciphertext, tag }))
                    }
                };
                let puzzles = self.session_key(&key).puzzles().to_vec();
                session.state = SessionState::AwaitObligations { key, wrapped };
                Ok(Msg::Puzzles { puzzles })
            }
            (SessionState::AwaitObligations { key, wrapped }, Msg::Obligations { obligations }) => {
                let mini = self.session_key(&key);
                if obligations.len() != mini.n() {
                    return Err(ProtocolError::Malformed(format!(
                        "expected {} obligations, got {}",
                        mini.n(),
                        obligations.len()
                    )));
                }
                if obligations.iter().any(|o| o.width() != mini.w()) {
                    return Err(ProtocolError::Malformed("obligation width".into()));
                }
                let tag = mac_tag(mini.mac_key(), &encode_obligations(mini.w(), &obligations));
                Ok(Msg::TagNote { tag, wrapped })
            }
            (SessionState::Fresh, Msg::VerifyInit { wrapped }) => {
                let key = match (&self.key, wrapped) {
                    (BankKey::Mini(_), None) => None,
                    (BankKey::Full(fk), Some(wk)) => {
                        if !mac_verify(&fk.mac_key, &wk.ciphertext.to_bytes(), &wk.tag) {
                            return Ok(Msg::Result { accepted: false });
                        }
                        match MiniKey::from_bytes(&decrypt(&fk.enc_key, &wk.ciphertext)) {
                            Ok(k) => Some(k),
                            Err(_) => return Ok(Msg::Result { accepted: false }),
                        }
                    }
                    (BankKey::Mini(_), Some(_)) => {
                        return Err(ProtocolError::Malformed(
                            "mini-scheme bank takes no wrapped key".into(),
                        ))
                    }
                    (BankKey::Full(_), None) => {
                        return Err(ProtocolError::Malformed("wrapped key required".into()))
                    }
                };
                let n = self.session_key(&key).n();
                let challenge: Vec<bool> = (0..n).map(|_| session.rng.gen()).collect();
                session.state = SessionState::AwaitAnswers {
                    key,
                    challenge: challenge.clone(),
                };
                Ok(Msg::Challenge { bits: challenge })
            }
            (
                SessionState::AwaitAnswers { key, challenge },
                Msg::Answers {
                    answers,
                    obligations,
                    tag,
                },
            ) => {
                let mini = self.session_key(&key);
                let accepted = decide(mini, &challenge, &answers, &obligations, &tag);
                Ok(Msg::Result { accepted })
            }
            (SessionState::Finished, _) => Err(ProtocolError::Finished),
            (state, other) => {
                let expected = match state {
                    SessionState::Fresh => "MINT_INIT or VERIFY_INIT",
                    SessionState::AwaitObligations { .. } => "OBLIGATIONS",
                    SessionState::AwaitAnswers { .. } => "ANSWERS",
                    SessionState::Finished => unreachable!(),
                };
                Err(ProtocolError::OutOfOrder {
                    expected,
                    got: other.kind(),
                })
            }
        }
    }
}

/// `r = r_MAC * prod_i V(p_i, v_i, o_i, b_i, a_i)`; arity or width problems
/// reject.
fn decide(
    key: &MiniKey,
    challenge: &[bool],
    answers: &[Answer],
    obligations: &[Obligation],
    tag: &Tag,
) -> bool {
    if obligations.len() != key.n() || answers.len() != key.n() {
        return false;
    }
    if obligations.iter().any(|o| o.width() != key.w()) {
        return false;
    }
    let r_mac = mac_verify(key.mac_key(), &encode_obligations(key.w(), obligations), tag);
    let r_puzzles = puzzles::verify_vec(key.puzzles(), key.verkeys(), obligations, challenge, answers)
        .unwrap_or(false);
    r_mac & r_puzzles
}

/// In-process link: each opened conversation is a fresh bank session.
pub struct LocalBankLink {
    bank: Arc<PrivateBank>,
    rng: ChaCha20Rng,
}

impl LocalBankLink {
    pub fn new(bank: Arc<PrivateBank>, rng: ChaCha20Rng) -> Self {
        Self { bank, rng }
    }
}

struct LocalConversation {
    bank: Arc<PrivateBank>,
    session: BankSession,
}

impl Conversation for LocalConversation {
    fn exchange(&mut self, msg: Msg) -> Result<Msg, ProtocolError> {
        if self.session.is_finished() {
            return Err(ProtocolError::Finished);
        }
        Ok(self
            .bank
            .handle(&mut self.session, msg)
            .unwrap_or_else(|e| Msg::Error {
                reason: e.to_string(),
            }))
    }
}

impl BankLink for LocalBankLink {
    fn open(&mut self) -> Result<Box<dyn Conversation>, ProtocolError> {
        let rng = ChaCha20Rng::from_rng(&mut self.rng).expect("chacha reseed");
        Ok(Box::new(LocalConversation {
            bank: self.bank.clone(),
            session: BankSession::new(rng),
        }))
    }
}
