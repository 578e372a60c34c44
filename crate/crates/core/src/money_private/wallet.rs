//! Wallet side of the private schemes.

use rand::Rng;

use super::{FullBanknote, MiniBanknote, VerifyTranscript, WrappedKey};
use crate::protocol::{Conversation, Msg, ProtocolError};
use crate::puzzles::{self, AnswerKind};

/// What a classical verification produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub accepted: bool,
    /// An equation answer came out as `d = 0`; the bank rejects it whatever
    /// else happens.
    pub burned: bool,
    /// `None` when the bank rejected the wrapped key before challenging.
    pub transcript: Option<VerifyTranscript>,
}

fn mint_exchange<R: Rng + ?Sized>(
    conv: &mut dyn Conversation,
    rng: &mut R,
) -> Result<(MiniBanknote, Option<WrappedKey>), ProtocolError> {
    let puzzles = match conv.exchange(Msg::MintInit)? {
        Msg::Puzzles { puzzles } => puzzles,
        other => return Err(ProtocolError::unexpected("PUZZLES", &other)),
    };
    let w = puzzles.first().map(|p| p.width()).unwrap_or(0);
    if w == 0 || puzzles.iter().any(|p| p.width() != w) {
        return Err(ProtocolError::Malformed("puzzle widths".into()));
    }
    let (obligations, states) = puzzles::obligate_n(&puzzles, rng);
    let reply = conv.exchange(Msg::Obligations {
        obligations: obligations.clone(),
    })?;
    match reply {
        Msg::TagNote { tag, wrapped } => Ok((
            MiniBanknote {
                obligations,
                obligation_tag: tag,
                states,
            },
            wrapped,
        )),
        other => Err(ProtocolError::unexpected("TAG_NOTE", &other)),
    }
}

pub fn mini_mint_user<R: Rng + ?Sized>(
    conv: &mut dyn Conversation,
    rng: &mut R,
) -> Result<MiniBanknote, ProtocolError> {
    match mint_exchange(conv, rng)? {
        (note, None) => Ok(note),
        (_, Some(_)) => Err(ProtocolError::Malformed("unexpected wrapped key".into())),
    }
}

pub fn full_mint_user<R: Rng + ?Sized>(
    conv: &mut dyn Conversation,
    rng: &mut R,
) -> Result<FullBanknote, ProtocolError> {
    match mint_exchange(conv, rng)? {
        (note, Some(wrapped)) => Ok(FullBanknote { wrapped, note }),
        (_, None) => Err(ProtocolError::Malformed("missing wrapped key".into())),
    }
}

fn cverify<R: Rng + ?Sized>(
    conv: &mut dyn Conversation,
    wrapped: Option<&WrappedKey>,
    note: &mut MiniBanknote,
    rng: &mut R,
) -> Result<VerifyOutcome, ProtocolError> {
    if note.is_spent() {
        return Err(ProtocolError::NoteConsumed);
    }
    let challenge = match conv.exchange(Msg::VerifyInit {
        wrapped: wrapped.cloned(),
    })? {
        Msg::Challenge { bits } => bits,
        Msg::Result { accepted: false } if wrapped.is_some() => {
            return Ok(VerifyOutcome {
                accepted: false,
                burned: false,
                transcript: None,
            })
        }
        other => return Err(ProtocolError::unexpected("CHALLENGE", &other)),
    };
    if challenge.len() != note.n() {
        return Err(ProtocolError::Malformed(format!(
            "challenge has {} bits for {} states",
            challenge.len(),
            note.n()
        )));
    }
    let answers = note
        .states
        .iter_mut()
        .zip(&challenge)
        .map(|(s, &b)| puzzles::respond(s, b, rng))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let burned = answers
        .iter()
        .any(|a| a.kind == AnswerKind::Equation && a.payload.is_zero());
    let reply = conv.exchange(Msg::Answers {
        answers: answers.clone(),
        obligations: note.obligations.clone(),
        tag: note.obligation_tag.clone(),
    })?;
    let accepted = match reply {
        Msg::Result { accepted } => accepted,
        other => return Err(ProtocolError::unexpected("RESULT", &other)),
    };
    Ok(VerifyOutcome {
        accepted,
        burned,
        transcript: Some(VerifyTranscript {
            challenge,
            answers,
            obligations: note.obligations.clone(),
            tag: note.obligation_tag.clone(),
            result: accepted,
        }),
    })
}

/// Classical verification of a mini-scheme note. Measures every state, so
/// the note is spent whatever the bank decides.
pub fn mini_cverify_user<R: Rng + ?Sized>(
    conv: &mut dyn Conversation,
    note: &mut MiniBanknote,
    rng: &mut R,
) -> Result<VerifyOutcome, ProtocolError> {
    cverify(conv, None, note, rng)
}

/// Classical verification of a full-scheme note. If the bank rejects the
/// wrapped key outright, no state is measured.
pub fn full_cverify_user<R: Rng + ?Sized>(
    conv: &mut dyn Conversation,
    note: &mut FullBanknote,
    rng: &mut R,
) -> Result<VerifyOutcome, ProtocolError> {
    let FullBanknote { wrapped, note } = note;
    cverify(conv, Some(wrapped), note, rng)
}

/// Opens a verification and answers a fresh challenge with answers recorded
/// from an earlier one. Accepts only if the new challenge happens to agree
/// where it matters.
pub fn replay_user(
    conv: &mut dyn Conversation,
    wrapped: Option<&WrappedKey>,
    transcript: &VerifyTranscript,
) -> Result<bool, ProtocolError> {
    match conv.exchange(Msg::VerifyInit {
        wrapped: wrapped.cloned(),
    })? {
        Msg::Challenge { .. } => {}
        Msg::Result { accepted } => return Ok(accepted),
        other => return Err(ProtocolError::unexpected("CHALLENGE", &other)),
    }
    match conv.exchange(Msg::Answers {
        answers: transcript.answers.clone(),
        obligations: transcript.obligations.clone(),
        tag: transcript.tag.clone(),
    })? {
        Msg::Result { accepted } => Ok(accepted),
        other => Err(ProtocolError::unexpected("RESULT", &other)),
    }
}
