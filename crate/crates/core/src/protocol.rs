//! Messages exchanged between wallet and bank, and the conversation traits
//! both sides are driven through.
//!
//! Private scheme, mint: `MINT_INIT -> PUZZLES`, `OBLIGATIONS -> TAG_NOTE`.
//! Private scheme, verify: `VERIFY_INIT -> CHALLENGE`, `ANSWERS -> RESULT`
//! (or `VERIFY_INIT -> RESULT` when the wrapped key fails its MAC).
//! Public scheme: `P_MINT_SERIAL -> P_SIGNATURE` and `P_SPEND -> RESULT`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::money_private::WrappedKey;
use crate::money_public::{Certificate, Serial};
use crate::primitives::Tag;
use crate::puzzles::{Answer, Obligation, Puzzle};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Msg {
    MintInit,
    Puzzles {
        puzzles: Vec<Puzzle>,
    },
    Obligations {
        obligations: Vec<Obligation>,
    },
    TagNote {
        tag: Tag,
        wrapped: Option<WrappedKey>,
    },
    VerifyInit {
        wrapped: Option<WrappedKey>,
    },
    Challenge {
        bits: Vec<bool>,
    },
    Answers {
        answers: Vec<Answer>,
        obligations: Vec<Obligation>,
        tag: Tag,
    },
    Result {
        accepted: bool,
    },
    PMintSerial {
        serial: Serial,
    },
    PSignature {
        signature: Vec<u8>,
    },
    PSpend {
        serial: Serial,
        signature: Vec<u8>,
        certificate: Certificate,
    },
    Error {
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MsgType {
    MintInit,
    Puzzles,
    Obligations,
    TagNote,
    VerifyInit,
    Challenge,
    Answers,
    Result,
    PMintSerial,
    PSignature,
    PSpend,
    Error,
}

impl MsgType {
    pub const ALL: [MsgType; 12] = [
        MsgType::MintInit,
        MsgType::Puzzles,
        MsgType::Obligations,
        MsgType::TagNote,
        MsgType::VerifyInit,
        MsgType::Challenge,
        MsgType::Answers,
        MsgType::Result,
        MsgType::PMintSerial,
        MsgType::PSignature,
        MsgType::PSpend,
        MsgType::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MsgType::MintInit => "MINT_INIT",
            MsgType::Puzzles => "PUZZLES",
            MsgType::Obligations => "OBLIGATIONS",
            MsgType::TagNote => "TAG_NOTE",
            MsgType::VerifyInit => "VERIFY_INIT",
            MsgType::Challenge => "CHALLENGE",
            MsgType::Answers => "ANSWERS",
            MsgType::Result => "RESULT",
            MsgType::PMintSerial => "P_MINT_SERIAL",
            MsgType::PSignature => "P_SIGNATURE",
            MsgType::PSpend => "P_SPEND",
            MsgType::Error => "ERROR",
        }
    }
}

impl fmt::Display for MsgType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MsgType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MsgType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

impl Msg {
    pub fn kind(&self) -> MsgType {
        match self {
            Msg::MintInit => MsgType::MintInit,
            Msg::Puzzles { .. } => MsgType::Puzzles,
            Msg::Obligations { .. } => MsgType::Obligations,
            Msg::TagNote { .. } => MsgType::TagNote,
            Msg::VerifyInit { .. } => MsgType::VerifyInit,
            Msg::Challenge { .. } => MsgType::Challenge,
            Msg::Answers { .. } => MsgType::Answers,
            Msg::Result { .. } => MsgType::Result,
            Msg::PMintSerial { .. } => MsgType::PMintSerial,
            Msg::PSignature { .. } => MsgType::PSignature,
            Msg::PSpend { .. } => MsgType::PSpend,
            Msg::Error { .. } => MsgType::Error,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("protocol violation: expected {expected}, got {got}")]
    OutOfOrder { expected: &'static str, got: MsgType },
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("session aborted by peer: {0}")]
    Aborted(String),
    #[error("session already finished")]
    Finished,
    #[error("note already consumed")]
    NoteConsumed,
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("transport failure: {0}")]
    Transport(String),
}

impl ProtocolError {
    /// Shorthand for a reply that does not fit the protocol step.
    pub fn unexpected(expected: &'static str, got: &Msg) -> Self {
        match got {
            Msg::Error { reason } => ProtocolError::Aborted(reason.clone()),
            other => ProtocolError::OutOfOrder {
                expected,
                got: other.kind(),
            },
        }
    }
}

/// One protocol session, seen from the wallet: send a message, receive the
/// bank's reply.
pub trait Conversation {
    fn exchange(&mut self, msg: Msg) -> Result<Msg, ProtocolError>;
}

/// Something a wallet can open sessions with: an in-process bank, a socket,
/// or a referee wrapping either.
pub trait BankLink {
    fn open(&mut self) -> Result<Box<dyn Conversation>, ProtocolError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_names_roundtrip() {
        for t in MsgType::ALL {
            assert_eq!(t.as_str().parse::<MsgType>().unwrap(), t);
        }
        assert!("BOGUS".parse::<MsgType>().is_err());
    }

    #[test]
    fn error_replies_become_aborts() {
        let e = ProtocolError::unexpected(
            "PUZZLES",
            &Msg::Error {
                reason: "no".into(),
            },
        );
        assert_eq!(e, ProtocolError::Aborted("no".into()));
        let e = ProtocolError::unexpected("PUZZLES", &Msg::MintInit);
        assert!(matches!(e, ProtocolError::OutOfOrder { got: MsgType::MintInit, .. }));
    }
}
