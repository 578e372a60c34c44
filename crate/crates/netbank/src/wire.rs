//! Line-delimited JSON framing.
//!
//! Every line is one envelope:
//!
//! ```text
//! {"session":"<32 hex>","seq":3,"type":"CHALLENGE","body":{"bits":"a0","n":4}}
//! ```
//!
//! Bit strings are lowercase hex of the big-endian packing (bit 0 is the
//! most significant bit of byte 0, padding zero in the low bits of the last
//! byte). Keys, tags, serials and signatures are plain lowercase hex.

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use semiqm_core::money_private::WrappedKey;
use semiqm_core::money_public::{Certificate, Serial};
use semiqm_core::ntcf::{FunctionKey, Image};
use semiqm_core::primitives::{Ciphertext, Tag, TAG_LEN};
use semiqm_core::protocol::{Msg, MsgType};
use semiqm_core::puzzles::{Answer, AnswerKind, Obligation, Puzzle};
use semiqm_core::qsim::{pack_bits, unpack_bits, BitVec};

pub const SESSION_ID_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("malformed envelope: {0}")]
    Envelope(String),
    #[error("unknown message type {name:?}")]
    UnknownType {
        session: SessionId,
        seq: u64,
        name: String,
    },
    #[error("malformed {kind} body: {detail}")]
    Body { kind: MsgType, detail: String },
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SessionId(pub [u8; SESSION_ID_LEN]);

impl SessionId {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, WireError> {
        let bytes = strict_hex(s).map_err(WireError::Envelope)?;
        let arr = bytes
            .try_into()
            .map_err(|_| WireError::Envelope(format!("session id must be {SESSION_ID_LEN} bytes")))?;
        Ok(Self(arr))
    }
}

impl fmt::Debug for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionId({})", self.to_hex())
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub session: SessionId,
    pub seq: u64,
    pub msg: Msg,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    session: String,
    seq: u64,
    #[serde(rename = "type")]
    kind: String,
    body: Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyBody {}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PuzzlesBody {
    w: usize,
    puzzles: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObligationsBody {
    w: usize,
    obligations: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WrappedBody {
    ciphertext: String,
    tag: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TagNoteBody {
    tag: String,
    wrapped: Option<WrappedBody>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyInitBody {
    wrapped: Option<WrappedBody>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChallengeBody {
    n: usize,
    bits: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerBody {
    i: u8,
    kind: String,
    payload: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswersBody {
    w: usize,
    answers: Vec<AnswerBody>,
    obligations: Vec<String>,
    tag: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResultBody {
    accepted: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SerialBody {
    serial: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignatureBody {
    signature: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpendBody {
    serial: String,
    signature: String,
    certificate: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ErrorBody {
    reason: String,
}

fn strict_hex(s: &str) -> Result<Vec<u8>, String> {
    if s.chars().any(|c| c.is_ascii_uppercase()) {
        return Err("hex must be lowercase".into());
    }
    hex::decode(s).map_err(|e| e.to_string())
}

fn width_of(items: &[Obligation]) -> usize {
    items.first().map_or(0, |o| o.width())
}

fn wrapped_body(wk: &WrappedKey) -> WrappedBody {
    WrappedBody {
        ciphertext: hex::encode(wk.ciphertext.to_bytes()),
        tag: hex::encode(wk.tag.0),
    }
}

fn answer_kind(kind: AnswerKind) -> &'static str {
    match kind {
        AnswerKind::Preimage => "PREIMAGE",
        AnswerKind::Equation => "EQUATION",
    }
}

fn body_of(msg: &Msg) -> Value {
    let v = match msg {
        Msg::MintInit => serde_json::to_value(EmptyBody {}),
        Msg::Puzzles { puzzles } => serde_json::to_value(PuzzlesBody {
            w: puzzles.first().map_or(0, |p| p.width()),
            puzzles: puzzles.iter().map(|p| hex::encode(p.key().to_bytes())).collect(),
        }),
        Msg::Obligations { obligations } => serde_json::to_value(ObligationsBody {
            w: width_of(obligations),
            obligations: obligations.iter().map(|o| o.0 .0.to_hex()).collect(),
        }),
        Msg::TagNote { tag, wrapped } => serde_json::to_value(TagNoteBody {
            tag: hex::encode(tag.0),
            wrapped: wrapped.as_ref().map(wrapped_body),
        }),
        Msg::VerifyInit { wrapped } => serde_json::to_value(VerifyInitBody {
            wrapped: wrapped.as_ref().map(wrapped_body),
        }),
        Msg::Challenge { bits } => serde_json::to_value(ChallengeBody {
            n: bits.len(),
            bits: hex::encode(pack_bits(bits)),
        }),
        Msg::Answers {
            answers,
            obligations,
            tag,
        } => serde_json::to_value(AnswersBody {
            w: answers
                .first()
                .map_or_else(|| width_of(obligations), |a| a.payload.width()),
            answers: answers
                .iter()
                .map(|a| AnswerBody {
                    i: a.i as u8,
                    kind: answer_kind(a.kind).to_string(),
                    payload: a.payload.to_hex(),
                })
                .collect(),
            obligations: obligations.iter().map(|o| o.0 .0.to_hex()).collect(),
            tag: hex::encode(tag.0),
        }),
        Msg::Result { accepted } => serde_json::to_value(ResultBody {
            accepted: *accepted,
        }),
        Msg::PMintSerial { serial } => serde_json::to_value(SerialBody {
            serial: serial.to_hex(),
        }),
        Msg::PSignature { signature } => serde_json::to_value(SignatureBody {
            signature: hex::encode(signature),
        }),
        Msg::PSpend {
            serial,
            signature,
            certificate,
        } => serde_json::to_value(SpendBody {
            serial: serial.to_hex(),
            signature: hex::encode(signature),
            certificate: certificate.to_hex(),
        }),
        Msg::Error { reason } => serde_json::to_value(ErrorBody {
            reason: reason.clone(),
        }),
    };
    v.expect("bodies serialize")
}

/// One envelope as a single JSON line, without the trailing newline.
pub fn encode(m: &WireMessage) -> String {
    let env = Envelope {
        session: m.session.to_hex(),
        seq: m.seq,
        kind: m.msg.kind().as_str().to_string(),
        body: body_of(&m.msg),
    };
    serde_json::to_string(&env).expect("envelope serializes")
}

struct BodyDecoder {
    kind: MsgType,
}

impl BodyDecoder {
    fn err(&self, detail: impl fmt::Display) -> WireError {
        WireError::Body {
            kind: self.kind,
            detail: detail.to_string(),
        }
    }

    fn parse<T: DeserializeOwned>(&self, body: Value) -> Result<T, WireError> {
        serde_json::from_value(body).map_err(|e| self.err(e))
    }

    fn hex(&self, s: &str) -> Result<Vec<u8>, WireError> {
        strict_hex(s).map_err(|e| self.err(e))
    }

    fn bitvec(&self, s: &str, w: usize) -> Result<BitVec, WireError> {
        BitVec::from_hex(s, w).map_err(|e| self.err(e))
    }

    fn obligations(&self, items: &[String], w: usize) -> Result<Vec<Obligation>, WireError> {
        items
            .iter()
            .map(|s| Ok(Obligation(Image(self.bitvec(s, w)?))))
            .collect()
    }

    fn tag(&self, s: &str) -> Result<Tag, WireError> {
        let bytes = self.hex(s)?;
        let arr: [u8; TAG_LEN] = bytes
            .try_into()
            .map_err(|_| self.err(format!("tag must be {TAG_LEN} bytes")))?;
        Ok(Tag(arr))
    }

    fn wrapped(&self, body: Option<WrappedBody>) -> Result<Option<WrappedKey>, WireError> {
        body.map(|b| {
            let ciphertext =
                Ciphertext::from_bytes(&self.hex(&b.ciphertext)?).map_err(|e| self.err(e))?;
            Ok(WrappedKey {
                ciphertext,
                tag: self.tag(&b.tag)?,
            })
        })
        .transpose()
    }

    fn fixed32(&self, s: &str) -> Result<[u8; 32], WireError> {
        self.hex(s)?
            .try_into()
            .map_err(|_| self.err("expected 32 bytes"))
    }

    fn serial(&self, s: &str) -> Result<Serial, WireError> {
        Ok(Serial(self.fixed32(s)?))
    }

    fn decode(&self, body: Value) -> Result<Msg, WireError> {
        Ok(match self.kind {
            MsgType::MintInit => {
                let EmptyBody {} = self.parse(body)?;
                Msg::MintInit
            }
            MsgType::Puzzles => {
                let b: PuzzlesBody = self.parse(body)?;
                let puzzles = b
                    .puzzles
                    .iter()
                    .map(|s| {
                        let key = FunctionKey::from_bytes(&self.hex(s)?).map_err(|e| self.err(e))?;
                        if key.width() != b.w {
                            return Err(self.err("puzzle width disagrees with w"));
                        }
                        Ok(Puzzle::from_key(key))
                    })
                    .collect::<Result<_, _>>()?;
                Msg::Puzzles { puzzles }
            }
            MsgType::Obligations => {
                let b: ObligationsBody = self.parse(body)?;
                Msg::Obligations {
                    obligations: self.obligations(&b.obligations, b.w)?,
                }
            }
            MsgType::TagNote => {
                let b: TagNoteBody = self.parse(body)?;
                Msg::TagNote {
                    tag: self.tag(&b.tag)?,
                    wrapped: self.wrapped(b.wrapped)?,
                }
            }
            MsgType::VerifyInit => {
                let b: VerifyInitBody = self.parse(body)?;
                Msg::VerifyInit {
                    wrapped: self.wrapped(b.wrapped)?,
                }
            }
            MsgType::Challenge => {
                let b: ChallengeBody = self.parse(body)?;
                let bits = unpack_bits(&self.hex(&b.bits)?, b.n).map_err(|e| self.err(e))?;
                Msg::Challenge { bits }
            }
            MsgType::Answers => {
                let b: AnswersBody = self.parse(body)?;
                let answers = b
                    .answers
                    .iter()
                    .map(|a| {
                        let i = match a.i {
                            0 => false,
                            1 => true,
                            other => return Err(self.err(format!("answer bit {other}"))),
                        };
                        let kind = match a.kind.as_str() {
                            "PREIMAGE" => AnswerKind::Preimage,
                            "EQUATION" => AnswerKind::Equation,
                            other => return Err(self.err(format!("answer kind {other:?}"))),
                        };
                        Ok(Answer {
                            i,
                            payload: self.bitvec(&a.payload, b.w)?,
                            kind,
                        })
                    })
                    .collect::<Result<_, _>>()?;
                Msg::Answers {
                    answers,
                    obligations: self.obligations(&b.obligations, b.w)?,
                    tag: self.tag(&b.tag)?,
                }
            }
            MsgType::Result => {
                let b: ResultBody = self.parse(body)?;
                Msg::Result {
                    accepted: b.accepted,
                }
            }
            MsgType::PMintSerial => {
                let b: SerialBody = self.parse(body)?;
                Msg::PMintSerial {
                    serial: self.serial(&b.serial)?,
                }
            }
            MsgType::PSignature => {
                let b: SignatureBody = self.parse(body)?;
                Msg::PSignature {
                    signature: self.hex(&b.signature)?,
                }
            }
            MsgType::PSpend => {
                let b: SpendBody = self.parse(body)?;
                let certificate = Certificate(self.fixed32(&b.certificate)?);
                Msg::PSpend {
                    serial: self.serial(&b.serial)?,
                    signature: self.hex(&b.signature)?,
                    certificate,
                }
            }
            MsgType::Error => {
                let b: ErrorBody = self.parse(body)?;
                Msg::Error { reason: b.reason }
            }
        })
    }
}

/// Parses one line (a trailing newline is allowed).
pub fn decode(line: &str) -> Result<WireMessage, WireError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let env: Envelope =
        serde_json::from_str(line).map_err(|e| WireError::Envelope(e.to_string()))?;
    let session = SessionId::from_hex(&env.session)?;
    let kind: MsgType = env.kind.parse().map_err(|name| WireError::UnknownType {
        session,
        seq: env.seq,
        name,
    })?;
    let msg = BodyDecoder { kind }.decode(env.body)?;
    Ok(WireMessage {
        session,
        seq: env.seq,
        msg,
    })
}

/// Session id and sequence number of a line, if its envelope parses at
/// all. Used to address an `ERROR` reply to a line that failed to decode.
pub fn peek_header(line: &str) -> Option<(SessionId, u64)> {
    let env: Envelope = serde_json::from_str(line.trim_end()).ok()?;
    Some((SessionId::from_hex(&env.session).ok()?, env.seq))
}
