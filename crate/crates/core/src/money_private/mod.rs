//! Private semi-quantum money.
//!
//! The mini-scheme issues a note as `n` claw states plus a MAC over their
//! obligations; verification challenges each puzzle with a random bit. The
//! full scheme wraps a fresh mini key per note: the bank encrypts it, MACs
//! the ciphertext, and hands both to the wallet, so it keeps nothing per note.
//!
//! [`bank`] holds the bank's session machine, [`wallet`] the user side.

pub mod bank;
pub mod wallet;

use rand::{CryptoRng, Rng};
use thiserror::Error;

use crate::primitives::{
    self, decode_fields, encode_fields, mac_keygen, Ciphertext, CryptoError, EncKey, MacKey, Tag,
};
use crate::puzzles::{self, Answer, Obligation, Puzzle, PuzzleError, VerKey};
use crate::qsim::ClawState;
use crate::ntcf::{FunctionKey, Trapdoor};

pub use bank::{BankSession, LocalBankLink, PrivateBank};
pub use wallet::{
    full_cverify_user, full_mint_user, mini_cverify_user, mini_mint_user, replay_user,
    VerifyOutcome,
};

/// Default puzzle width when none is configured.
pub const DEFAULT_WIDTH: usize = 16;

const MINI_KEY_MAGIC: &[u8] = b"semiqm-minikey";
const MINI_KEY_VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MoneyError {
    #[error("security parameter {0} too small (need at least 2)")]
    LambdaTooSmall(u32),
    #[error("invalid repetition count {0}")]
    InvalidCount(usize),
    #[error("invalid puzzle width {0} (need 2..=64)")]
    InvalidWidth(usize),
    #[error(transparent)]
    Puzzle(#[from] PuzzleError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("malformed mini key: {0}")]
    MalformedKey(String),
}

/// Scheme parameters: security parameter, number of puzzles per note,
/// puzzle width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Params {
    pub lambda: u32,
    pub n: usize,
    pub w: usize,
}

/// `ceil(log2(lambda)^2)`.
pub fn repetitions_for(lambda: u32) -> Result<usize, MoneyError> {
    if lambda < 2 {
        return Err(MoneyError::LambdaTooSmall(lambda));
    }
    let l = (lambda as f64).log2();
    Ok(((l * l) - 1e-9).ceil() as usize)
}

impl Params {
    pub fn new(lambda: u32) -> Result<Self, MoneyError> {
        Ok(Self {
            lambda,
            n: repetitions_for(lambda)?,
            w: DEFAULT_WIDTH,
        })
    }

    pub fn with_n(mut self, n: usize) -> Result<Self, MoneyError> {
        if n == 0 {
            return Err(MoneyError::InvalidCount(n));
        }
        self.n = n;
        Ok(self)
    }

    pub fn with_w(mut self, w: usize) -> Result<Self, MoneyError> {
        if !(2..=64).contains(&w) {
            return Err(MoneyError::InvalidWidth(w));
        }
        self.w = w;
        Ok(self)
    }
}

/// `k_$ = (p^n, v^n, k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniKey {
    puzzles: Vec<Puzzle>,
    verkeys: Vec<VerKey>,
    mac_key: MacKey,
    w: usize,
}

pub fn mini_keygen<R: Rng + CryptoRng + ?Sized>(
    params: &Params,
    rng: &mut R,
) -> Result<MiniKey, MoneyError> {
    let (puzzles, verkeys) = puzzles::gen_n(params.n, params.w, rng)?;
    Ok(MiniKey {
        puzzles,
        verkeys,
        mac_key: mac_keygen(rng),
        w: params.w,
    })
}

impl MiniKey {
    pub fn n(&self) -> usize {
        self.puzzles.len()
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn puzzles(&self) -> &[Puzzle] {
        &self.puzzles
    }

    pub fn verkeys(&self) -> &[VerKey] {
        &self.verkeys
    }

    pub fn mac_key(&self) -> &MacKey {
        &self.mac_key
    }

    /// Canonical encoding: length-prefixed fields
    /// `magic, version, n, w, (puzzle_i, verkey_i)*, mac_key`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut fields: Vec<Vec<u8>> = vec![
            MINI_KEY_MAGIC.to_vec(),
            vec![MINI_KEY_VERSION],
            (self.n() as u32).to_be_bytes().to_vec(),
            (self.w as u32).to_be_bytes().to_vec(),
        ];
        for (p, v) in self.puzzles.iter().zip(&self.verkeys) {
            fields.push(p.key().to_bytes());
            fields.push(v.trapdoor().to_bytes());
        }
        fields.push(self.mac_key.as_bytes().to_vec());
        encode_fields(&fields)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MoneyError> {
        let bad = |m: &str| MoneyError::MalformedKey(m.to_string());
        let fields = decode_fields(bytes)?;
        if fields.len() < 5 || fields[0] != MINI_KEY_MAGIC {
            return Err(bad("missing header"));
        }
        if fields[1] != [MINI_KEY_VERSION] {
            return Err(bad("unsupported version"));
        }
        let read_u32 = |f: &[u8]| -> Result<usize, MoneyError> {
            Ok(u32::from_be_bytes(f.try_into().map_err(|_| bad("bad integer"))?) as usize)
        };
        let n = read_u32(fields[2])?;
        let w = read_u32(fields[3])?;
        if n == 0 || fields.len() != 5 + 2 * n {
            return Err(bad("field count does not match n"));
        }
        let mut puzzles = Vec::with_capacity(n);
        let mut verkeys = Vec::with_capacity(n);
        for pair in fields[4..4 + 2 * n].chunks(2) {
            let key = FunctionKey::from_bytes(pair[0]).map_err(|e| bad(&e.to_string()))?;
            let td = Trapdoor::from_bytes(pair[1]).map_err(|e| bad(&e.to_string()))?;
            let (p, v) = (Puzzle::from_key(key), VerKey::from_trapdoor(td));
            if p.width() != w || !v.matches(&p) {
                return Err(bad("puzzle and verification key disagree"));
            }
            puzzles.push(p);
            verkeys.push(v);
        }
        let mac_key = MacKey::from_bytes(fields[4 + 2 * n])?;
        Ok(Self {
            puzzles,
            verkeys,
            mac_key,
            w,
        })
    }
}

/// Bytes MACed for an obligation vector: the width, then each obligation.
pub fn encode_obligations(w: usize, obligations: &[Obligation]) -> Vec<u8> {
    let mut fields = Vec::with_capacity(obligations.len() + 1);
    fields.push((w as u32).to_be_bytes().to_vec());
    fields.extend(obligations.iter().map(|o| o.0 .0.to_bytes()));
    encode_fields(&fields)
}

/// The wallet's mini-scheme note `(o^n, t_o, psi^n)`.
#[derive(Debug, PartialEq, Eq)]
pub struct MiniBanknote {
    pub obligations: Vec<Obligation>,
    pub obligation_tag: Tag,
    pub states: Vec<ClawState>,
}

impl MiniBanknote {
    pub fn n(&self) -> usize {
        self.obligations.len()
    }

    pub fn w(&self) -> usize {
        self.obligations.first().map_or(0, |o| o.width())
    }

    /// True once any state has been measured.
    pub fn is_spent(&self) -> bool {
        self.states.iter().any(|s| s.is_consumed())
    }
}

/// `(k_m, k_e)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FullKey {
    pub mac_key: MacKey,
    pub enc_key: EncKey,
}

pub fn full_keygen<R: Rng + CryptoRng + ?Sized>(rng: &mut R) -> FullKey {
    FullKey {
        mac_key: mac_keygen(rng),
        enc_key: primitives::enc_keygen(rng),
    }
}

/// `(c, t)`: an encrypted mini key and the MAC over the ciphertext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrappedKey {
    pub ciphertext: Ciphertext,
    pub tag: Tag,
}

#[derive(Debug, PartialEq, Eq)]
pub struct FullBanknote {
    pub wrapped: WrappedKey,
    pub note: MiniBanknote,
}

/// One verification run as the wallet saw it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyTranscript {
    pub challenge: Vec<bool>,
    pub answers: Vec<Answer>,
    pub obligations: Vec<Obligation>,
    pub tag: Tag,
    pub result: bool,
}
