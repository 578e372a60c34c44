//! Trapdoor claw-free function family, exact hidden-shift instantiation.
//!
//! `f_{k,b}(x) = P(x xor b*s)` where `P` is a keyed Feistel permutation of
//! `{0,1}^w` and `s` is a nonzero shift. Both `f_{k,0}` and `f_{k,1}` are
//! bijections, every image has exactly one preimage under each, and the two
//! preimages differ by `s`. The trapdoor is `(P, s)`.
//!
//! This family has the interface of a noisy trapdoor claw-free family with
//! point-mass densities, the identity as the injection `J`, and the good set
//! `G_{k,b,x}` equal to all nonzero strings. It is not claw-free against a
//! classical adversary: anyone holding the key material can invert `P`.
//! The money code never relies on that hardness.

use rand::{CryptoRng, Rng};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::qsim::{BitVec, SimError};

/// Number of Feistel rounds in the keyed permutation.
pub const FEISTEL_ROUNDS: usize = 6;

/// Bytes of key material for the permutation.
pub const PERM_KEY_LEN: usize = 32;

const KEY_TAG: u8 = b'K';
const TRAPDOOR_TAG: u8 = b'T';

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NtcfError {
    #[error("function width must be at least 2, got {0}")]
    WidthTooSmall(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("malformed key encoding: {0}")]
    Encoding(String),
}

fn mask(bits: usize) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Keyed permutation of `{0,1}^w`. For odd `w` the halves alternate between
/// `ceil(w/2)` and `floor(w/2)` bits; an even round count restores the split.
#[derive(Clone, PartialEq, Eq)]
struct FeistelPermutation {
    width: usize,
    key: [u8; PERM_KEY_LEN],
}

impl FeistelPermutation {
    fn round_fn(&self, round: usize, input: u64, out_bits: usize) -> u64 {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update([round as u8, self.width as u8]);
        h.update(input.to_be_bytes());
        let digest = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        u64::from_be_bytes(word) & mask(out_bits)
    }

    fn forward(&self, x: u64) -> u64 {
        let mut lw = self.width.div_ceil(2);
        let mut rw = self.width - lw;
        let mut v = x;
        for round in 0..FEISTEL_ROUNDS {
            let left = v >> rw;
            let right = v & mask(rw);
            let mixed = left ^ self.round_fn(round, right, lw);
            v = (right << lw) | mixed;
            std::mem::swap(&mut lw, &mut rw);
        }
        v
    }

    fn inverse(&self, y: u64) -> u64 {
        // after an even number of rounds the split is back to (lw, rw)
        let mut lw = self.width.div_ceil(2);
        let mut rw = self.width - lw;
        if FEISTEL_ROUNDS % 2 == 1 {
            std::mem::swap(&mut lw, &mut rw);
        }
        let mut v = y;
        for round in (0..FEISTEL_ROUNDS).rev() {
            // v = (right:rw_prev) || (mixed:lw_prev), where the previous split
            // was (lw_prev, rw_prev) = (rw, lw) of the current one
            let (lw_prev, rw_prev) = (rw, lw);
            let right = v >> lw_prev;
            let mixed = v & mask(lw_prev);
            let left = mixed ^ self.round_fn(round, right, lw_prev);
            v = (left << rw_prev) | right;
            lw = lw_prev;
            rw = rw_prev;
        }
        v
    }
}

/// Public description `k` of a function pair.
///
/// The exact stand-in needs the shift to evaluate `f_{k,1}`, so it is part
/// of the key material; it has no public accessor.
#[derive(Clone, PartialEq, Eq)]
pub struct FunctionKey {
    perm: FeistelPermutation,
    shift: BitVec,
}

impl std::fmt::Debug for FunctionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionKey")
            .field("width", &self.width())
            .finish_non_exhaustive()
    }
}

/// Trapdoor `t_k`: inverts both functions of its key.
#[derive(Clone, PartialEq, Eq)]
pub struct Trapdoor {
    perm: FeistelPermutation,
    shift: BitVec,
}

impl std::fmt::Debug for Trapdoor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trapdoor")
            .field("width", &self.shift.width())
            .finish_non_exhaustive()
    }
}

/// An element `y` of the range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Image(pub BitVec);

/// Classification of a tuple `(b, x, d, c)` against the hardcore-bit sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HardcoreClass {
    InH,
    InHBar,
    Neither,
}

pub fn keygen<R: Rng + CryptoRng + ?Sized>(
    width: usize,
    rng: &mut R,
) -> Result<(FunctionKey, Trapdoor), NtcfError> {
    if width < 2 {
        return Err(NtcfError::WidthTooSmall(width));
    }
    let mut key = [0u8; PERM_KEY_LEN];
    rng.fill_bytes(&mut key);
    let shift = loop {
        let s = BitVec::random(width, rng)?;
        if !s.is_zero() {
            break s;
        }
    };
    let perm = FeistelPermutation { width, key };
    Ok((
        FunctionKey {
            perm: perm.clone(),
            shift,
        },
        Trapdoor { perm, shift },
    ))
}

fn encode_parts(tag: u8, perm: &FeistelPermutation, shift: &BitVec) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 + PERM_KEY_LEN + 8);
    out.push(tag);
    out.push(perm.width as u8);
    out.extend_from_slice(&perm.key);
    out.extend_from_slice(&shift.to_bytes());
    out
}

fn decode_parts(tag: u8, bytes: &[u8]) -> Result<(FeistelPermutation, BitVec), NtcfError> {
    if bytes.len() < 2 + PERM_KEY_LEN || bytes[0] != tag {
        return Err(NtcfError::Encoding("bad header".into()));
    }
    let width = bytes[1] as usize;
    if width < 2 {
        return Err(NtcfError::WidthTooSmall(width));
    }
    let mut key = [0u8; PERM_KEY_LEN];
    key.copy_from_slice(&bytes[2..2 + PERM_KEY_LEN]);
    let shift = BitVec::from_bytes(&bytes[2 + PERM_KEY_LEN..], width)?;
    if shift.is_zero() {
        return Err(NtcfError::Encoding("zero shift".into()));
    }
    Ok((FeistelPermutation { width, key }, shift))
}

impl FunctionKey {
    pub fn width(&self) -> usize {
        self.perm.width
    }

    fn check_width(&self, x: &BitVec) -> Result<(), NtcfError> {
        if x.width() != self.width() {
            return Err(SimError::WidthMismatch {
                left: self.width(),
                right: x.width(),
            }
            .into());
        }
        Ok(())
    }

    /// `f_{k,b}(x)`.
    pub fn eval(&self, b: bool, x: &BitVec) -> Result<Image, NtcfError> {
        self.check_width(x)?;
        let input = if b { x.xor(&self.shift)? } else { *x };
        Ok(Image(BitVec::new(self.perm.forward(input.value()), self.width())?))
    }

    /// `CHK_F`: whether `y = f_{k,b}(x)`.
    pub fn check(&self, b: bool, x: &BitVec, y: &Image) -> Result<bool, NtcfError> {
        self.check_width(&y.0)?;
        Ok(self.eval(b, x)? == *y)
    }

    /// The trapdoor hidden in the exact stand-in's key. Only honest state
    /// preparation may use it.
    pub(crate) fn physics_trapdoor(&self) -> Trapdoor {
        Trapdoor {
            perm: self.perm.clone(),
            shift: self.shift,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_parts(KEY_TAG, &self.perm, &self.shift)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NtcfError> {
        let (perm, shift) = decode_parts(KEY_TAG, bytes)?;
        Ok(Self { perm, shift })
    }
}

impl Trapdoor {
    pub fn width(&self) -> usize {
        self.perm.width
    }

    pub fn shift(&self) -> BitVec {
        self.shift
    }

    /// The function key this trapdoor belongs to.
    pub fn function_key(&self) -> FunctionKey {
        FunctionKey {
            perm: self.perm.clone(),
            shift: self.shift,
        }
    }

    /// `INV_F(t, b, y)`: the unique `x` with `f_{k,b}(x) = y`.
    pub fn invert(&self, b: bool, y: &Image) -> Result<BitVec, NtcfError> {
        if y.0.width() != self.width() {
            return Err(SimError::WidthMismatch {
                left: self.width(),
                right: y.0.width(),
            }
            .into());
        }
        let base = BitVec::new(self.perm.inverse(y.0.value()), self.width())?;
        Ok(if b { base.xor(&self.shift)? } else { base })
    }

    /// Both preimages `(x0, x1)` of `y`.
    pub fn claw_of(&self, y: &Image) -> Result<(BitVec, BitVec), NtcfError> {
        Ok((self.invert(false, y)?, self.invert(true, y)?))
    }

    /// Membership of `d` in `G_{k,b,x}`: every nonzero string.
    pub fn good_set_member(&self, _b: bool, _x: &BitVec, d: &BitVec) -> bool {
        d.width() == self.width() && !d.is_zero()
    }

    /// Classifies `(b, x, d, c)` against `H_k` and its complement.
    pub fn hardcore_member(&self, b: bool, x: &BitVec, d: &BitVec, c: bool) -> HardcoreClass {
        if x.width() != self.width() || d.width() != self.width() {
            return HardcoreClass::Neither;
        }
        // the claw partner of x always exists: x xor s under the other bit
        let partner = x.xor(&self.shift).expect("widths checked");
        if !(self.good_set_member(b, x, d) && self.good_set_member(!b, &partner, d)) {
            return HardcoreClass::Neither;
        }
        let expected = d.dot(&self.shift).expect("widths checked");
        if c == expected {
            HardcoreClass::InH
        } else {
            HardcoreClass::InHBar
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_parts(TRAPDOOR_TAG, &self.perm, &self.shift)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NtcfError> {
        let (perm, shift) = decode_parts(TRAPDOOR_TAG, bytes)?;
        Ok(Self { perm, shift })
    }
}
