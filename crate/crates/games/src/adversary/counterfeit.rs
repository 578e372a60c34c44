use rand::Rng;

use semiqm_core::protocol::{Msg, ProtocolError};
use semiqm_core::puzzles::{Answer, AnswerKind};
use semiqm_core::qsim::{BasisState, BitVec};

use super::{Arena, Counterfeiter, Note};

/// Mints once and spends once.
#[derive(Debug, Clone, Copy, Default)]
pub struct HonestOnce;

impl Counterfeiter for HonestOnce {
    fn name(&self) -> &'static str {
        "honest"
    }

    fn play(&self, arena: &mut Arena<'_>) -> Result<(), ProtocolError> {
        let mut note = arena.mint()?;
        arena.verify(&mut note)?;
        Ok(())
    }
}

/// Mints `notes` notes and spends each once.
#[derive(Debug, Clone, Copy)]
pub struct HonestMany {
    pub notes: usize,
}

impl Counterfeiter for HonestMany {
    fn name(&self) -> &'static str {
        "honest-many"
    }

    fn play(&self, arena: &mut Arena<'_>) -> Result<(), ProtocolError> {
        for _ in 0..self.notes {
            let mut note = arena.mint()?;
            arena.verify(&mut note)?;
        }
        Ok(())
    }
}

/// Spends honestly, then resends the recorded answers `replays` times,
/// hoping a fresh challenge equals the first.
#[derive(Debug, Clone, Copy)]
pub struct Replay {
    pub replays: usize,
}

impl Counterfeiter for Replay {
    fn name(&self) -> &'static str {
        "replay"
    }

    fn play(&self, arena: &mut Arena<'_>) -> Result<(), ProtocolError> {
        let mut note = arena.mint()?;
        let Some(transcript) = arena.verify(&mut note)?.transcript else {
            return Ok(());
        };
        for _ in 0..self.replays {
            arena.replay(note.wrapped(), &transcript)?;
        }
        Ok(())
    }
}

/// Mints and spends `notes` notes honestly, then replays every transcript
/// once.
#[derive(Debug, Clone, Copy)]
pub struct HonestManyThenReplay {
    pub notes: usize,
}

impl Counterfeiter for HonestManyThenReplay {
    fn name(&self) -> &'static str {
        "honest-many-then-replay"
    }

    fn play(&self, arena: &mut Arena<'_>) -> Result<(), ProtocolError> {
        let mut spent = Vec::with_capacity(self.notes);
        for _ in 0..self.notes {
            let mut note = arena.mint()?;
            if let Some(t) = arena.verify(&mut note)?.transcript {
                spent.push((note, t));
            }
        }
        for (note, t) in &spent {
            arena.replay(note.wrapped(), t)?;
        }
        Ok(())
    }
}

/// Two spends of one note. Per index, a preimage challenge is answered by a
/// standard measurement that keeps the collapsed state; an equation
/// challenge by an honest Hadamard measurement. The second spend reuses an
/// answer when the bit repeats, measures the collapsed state in the
/// Hadamard basis for a new equation, and guesses when a preimage is asked
/// after an equation.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeasureBoth;

enum Held {
    Collapsed(BasisState, Answer),
    Equation(Answer),
}

impl Counterfeiter for MeasureBoth {
    fn name(&self) -> &'static str {
        "measure-both"
    }

    fn play(&self, arena: &mut Arena<'_>) -> Result<(), ProtocolError> {
        let mut note = arena.mint()?;
        let wrapped = note.wrapped().cloned();
        let w = note.inner().w();

        let mut conv = arena.open()?;
        let first = match conv.exchange(Msg::VerifyInit {
            wrapped: wrapped.clone(),
        })? {
            Msg::Challenge { bits } => bits,
            other => return Err(ProtocolError::unexpected("CHALLENGE", &other)),
        };
        if first.len() != note.inner().n() {
            return Err(ProtocolError::Malformed("challenge length".into()));
        }
        let mut held = Vec::with_capacity(first.len());
        for (state, &b) in note.inner_mut().states.iter_mut().zip(&first) {
            let h = if b {
                let (i, d) = state.measure_hadamard(arena.rng).map_err(sim)?;
                Held::Equation(Answer {
                    i,
                    payload: d,
                    kind: AnswerKind::Equation,
                })
            } else {
                let basis = state.collapse(arena.rng).map_err(sim)?;
                let (i, x) = basis.measure_standard();
                let a = Answer {
                    i,
                    payload: x,
                    kind: AnswerKind::Preimage,
                };
                Held::Collapsed(basis, a)
            };
            held.push(h);
        }
        let answers: Vec<Answer> = held
            .iter()
            .map(|h| match h {
                Held::Collapsed(_, a) | Held::Equation(a) => *a,
            })
            .collect();
        let inner = note.inner();
        let (obligations, tag) = (inner.obligations.clone(), inner.obligation_tag);
        conv.exchange(Msg::Answers {
            answers: answers.clone(),
            obligations: obligations.clone(),
            tag,
        })?;

        let mut conv = arena.open()?;
        let second = match conv.exchange(Msg::VerifyInit { wrapped })? {
            Msg::Challenge { bits } => bits,
            other => return Err(ProtocolError::unexpected("CHALLENGE", &other)),
        };
        if second.len() != held.len() {
            return Err(ProtocolError::Malformed("challenge length".into()));
        }
        let mut answers2 = Vec::with_capacity(held.len());
        for ((h, &b1), &b2) in held.iter_mut().zip(&first).zip(&second) {
            let a = match h {
                _ if b1 == b2 => answers[answers2.len()],
                Held::Collapsed(basis, _) => {
                    let (i, d) = basis.measure_hadamard(arena.rng).map_err(sim)?;
                    Answer {
                        i,
                        payload: d,
                        kind: AnswerKind::Equation,
                    }
                }
                Held::Equation(_) => Answer {
                    i: arena.rng.gen(),
                    payload: BitVec::random(w, arena.rng).map_err(sim)?,
                    kind: AnswerKind::Preimage,
                },
            };
            answers2.push(a);
        }
        conv.exchange(Msg::Answers {
            answers: answers2,
            obligations,
            tag,
        })?;
        Ok(())
    }
}

fn sim(e: impl std::fmt::Display) -> ProtocolError {
    ProtocolError::Malformed(e.to_string())
}

/// Flips one uniformly chosen bit of the wrapped key (nonce, ciphertext
/// body or tag) before spending. On a mini-scheme note the obligation tag is
/// flipped instead.
#[derive(Debug, Clone, Copy, Default)]
pub struct CiphertextTamper;

impl Counterfeiter for CiphertextTamper {
    fn name(&self) -> &'static str {
        "ciphertext-tamper"
    }

    fn play(&self, arena: &mut Arena<'_>) -> Result<(), ProtocolError> {
        let mut note = arena.mint()?;
        match &mut note {
            Note::Full(f) => {
                let wk = &mut f.wrapped;
                let bits = 8 * (wk.ciphertext.nonce.len() + wk.ciphertext.body.len() + wk.tag.0.len());
                let k = arena.rng.gen_range(0..bits);
                let (byte, mask) = (k / 8, 1u8 << (k % 8));
                let nonce_len = wk.ciphertext.nonce.len();
                let body_len = wk.ciphertext.body.len();
                if byte < nonce_len {
                    wk.ciphertext.nonce[byte] ^= mask;
                } else if byte < nonce_len + body_len {
                    wk.ciphertext.body[byte - nonce_len] ^= mask;
                } else {
                    wk.tag.0[byte - nonce_len - body_len] ^= mask;
                }
            }
            Note::Mini(m) => {
                let k = arena.rng.gen_range(0..8 * m.obligation_tag.0.len());
                m.obligation_tag.0[k / 8] ^= 1 << (k % 8);
            }
        }
        arena.verify(&mut note)?;
        Ok(())
    }
}
