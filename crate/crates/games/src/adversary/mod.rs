//! Adversary strategies.
//!
//! Everything in this module sees what a user sees: puzzles, its own claw
//! states and bolts, and the bank's replies. It never names trapdoors, bank
//! keys or referee state; `tests/audit.rs` checks the source text.

pub mod counterfeit;
pub mod public;
pub mod solve2;

use rand_chacha::ChaCha20Rng;

use semiqm_core::money_private::{
    full_cverify_user, full_mint_user, mini_cverify_user, mini_mint_user, replay_user,
    FullBanknote, MiniBanknote, VerifyOutcome, VerifyTranscript, WrappedKey,
};
use semiqm_core::protocol::{BankLink, Conversation, ProtocolError};
use semiqm_core::puzzles::{Answer, Obligation, Puzzle};

use crate::Scheme;

/// A user-side solver for the 2-of-2 game: given a puzzle, produce one
/// obligation and answers to both challenges.
pub trait Solve2Strategy: Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, p: &Puzzle, rng: &mut ChaCha20Rng) -> (Obligation, Answer, Answer);
}

/// What a counterfeiter is handed: a link to the bank and its own
/// randomness.
pub struct Arena<'a> {
    pub link: &'a mut dyn BankLink,
    pub scheme: Scheme,
    pub rng: &'a mut ChaCha20Rng,
}

/// A private-scheme counterfeiter. It drives whole sessions and may deviate
/// from the honest protocol at the message level.
pub trait Counterfeiter: Sync {
    fn name(&self) -> &'static str;

    /// Runs against the bank. Errors end the attempt; the referee scores
    /// whatever the bank decided up to that point.
    fn play(&self, arena: &mut Arena<'_>) -> Result<(), ProtocolError>;
}

/// A note of either private scheme, as the wallet holds it.
#[derive(Debug)]
pub enum Note {
    Mini(MiniBanknote),
    Full(FullBanknote),
}

impl Note {
    pub fn wrapped(&self) -> Option<&WrappedKey> {
        match self {
            Note::Mini(_) => None,
            Note::Full(f) => Some(&f.wrapped),
        }
    }

    pub fn inner(&self) -> &MiniBanknote {
        match self {
            Note::Mini(m) => m,
            Note::Full(f) => &f.note,
        }
    }

    pub fn inner_mut(&mut self) -> &mut MiniBanknote {
        match self {
            Note::Mini(m) => m,
            Note::Full(f) => &mut f.note,
        }
    }
}

impl Arena<'_> {
    pub fn open(&mut self) -> Result<Box<dyn Conversation>, ProtocolError> {
        self.link.open()
    }

    /// Honest mint.
    pub fn mint(&mut self) -> Result<Note, ProtocolError> {
        let mut conv = self.link.open()?;
        Ok(match self.scheme {
            Scheme::Mini => Note::Mini(mini_mint_user(conv.as_mut(), self.rng)?),
            Scheme::Full => Note::Full(full_mint_user(conv.as_mut(), self.rng)?),
        })
    }

    /// Honest classical verification.
    pub fn verify(&mut self, note: &mut Note) -> Result<VerifyOutcome, ProtocolError> {
        let mut conv = self.link.open()?;
        match note {
            Note::Mini(m) => mini_cverify_user(conv.as_mut(), m, self.rng),
            Note::Full(f) => full_cverify_user(conv.as_mut(), f, self.rng),
        }
    }

    /// Sends recorded answers against a fresh challenge.
    pub fn replay(
        &mut self,
        wrapped: Option<&WrappedKey>,
        transcript: &VerifyTranscript,
    ) -> Result<bool, ProtocolError> {
        let mut conv = self.link.open()?;
        replay_user(conv.as_mut(), wrapped, transcript)
    }
}
