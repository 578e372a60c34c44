//! Exact simulation of the handful of quantum states the money protocols use.
//!
//! A claw state `(|0,x0> + |1,x1>)/sqrt(2)` is kept symbolically as the pair
//! `(x0, x1)`; measurement outcomes are drawn from their closed-form
//! distributions. Standard-basis measurement picks one branch uniformly.
//! Hadamard-basis measurement of all `w + 1` qubits yields a uniform `d` and
//! the bit `i = d . (x0 xor x1)`. The relative phase `(-1)^(d . x0)` is
//! dropped since nothing downstream observes it.
//!
//! [`DenseState`] is a small full statevector used to cross-check the
//! symbolic path at widths up to [`MAX_DENSE_WIDTH`].

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

/// Largest width a [`BitVec`] can hold.
pub const MAX_WIDTH: usize = 64;

/// Largest claw width for which a dense statevector may be built.
pub const MAX_DENSE_WIDTH: usize = 8;

const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("width mismatch: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("invalid width {0} (must be 1..={MAX_WIDTH})")]
    InvalidWidth(usize),
    #[error("value does not fit in {0} bits")]
    ValueTooWide(usize),
    #[error("state already measured")]
    Consumed,
    #[error("claw branches must differ")]
    IdenticalBranches,
    #[error("dense simulation limited to width {MAX_DENSE_WIDTH}, got {0}")]
    DenseTooWide(usize),
    #[error("amplitudes are not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("malformed bit string: {0}")]
    Parse(String),
}

fn mask(bits: usize) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// A fixed-width string of bits. Bit index 0 is the most significant bit.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVec {
    value: u64,
    width: u8,
}

impl BitVec {
    pub fn new(value: u64, width: usize) -> Result<Self, SimError> {
        if width == 0 || width > MAX_WIDTH {
            return Err(SimError::InvalidWidth(width));
        }
        if value & !mask(width) != 0 {
            return Err(SimError::ValueTooWide(width));
        }
        Ok(Self {
            value,
            width: width as u8,
        })
    }

    pub fn zeros(width: usize) -> Result<Self, SimError> {
        Self::new(0, width)
    }

    pub fn random<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Result<Self, SimError> {
        let v: u64 = rng.gen();
        Self::new(v & mask(width), width)
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self, SimError> {
        let value = bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        Self::new(value, bits.len())
    }

    /// Every string of the given width in increasing numeric order.
    pub fn all(width: usize) -> Result<impl Iterator<Item = BitVec>, SimError> {
        if width == 0 || width > 32 {
            return Err(SimError::InvalidWidth(width));
        }
        Ok((0..(1u64 << width)).map(move |v| BitVec {
            value: v,
            width: width as u8,
        }))
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    /// Numeric value with bit 0 as the most significant bit.
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bit(&self, index: usize) -> bool {
        assert!(index < self.width(), "bit index out of range");
        (self.value >> (self.width() - 1 - index)) & 1 == 1
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..self.width()).map(|i| self.bit(i)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    fn same_width(&self, other: &BitVec) -> Result<(), SimError> {
        if self.width != other.width {
            return Err(SimError::WidthMismatch {
                left: self.width(),
                right: other.width(),
            });
        }
        Ok(())
    }

    pub fn xor(&self, other: &BitVec) -> Result<BitVec, SimError> {
        self.same_width(other)?;
        Ok(BitVec {
            value: self.value ^ other.value,
            width: self.width,
        })
    }

    /// Inner product mod 2.
    pub fn dot(&self, other: &BitVec) -> Result<bool, SimError> {
        self.same_width(other)?;
        Ok((self.value & other.value).count_ones() % 2 == 1)
    }

    /// Big-endian packing: bit 0 is the MSB of byte 0, unused low bits of the
    /// final byte are zero.
    pub fn to_bytes(&self) -> Vec<u8> {
        let nbytes = self.width().div_ceil(8);
        let shifted = (self.value as u128) << (nbytes * 8 - self.width());
        shifted.to_be_bytes()[16 - nbytes..].to_vec()
    }

    pub fn from_bytes(bytes: &[u8], width: usize) -> Result<Self, SimError> {
        if width == 0 || width > MAX_WIDTH {
            return Err(SimError::InvalidWidth(width));
        }
        let nbytes = width.div_ceil(8);
        if bytes.len() != nbytes {
            return Err(SimError::Parse(format!(
                "expected {nbytes} bytes for width {width}, got {}",
                bytes.len()
            )));
        }
        let packed = bytes.iter().fold(0u128, |acc, &b| (acc << 8) | b as u128);
        let pad = nbytes * 8 - width;
        if packed & ((1u128 << pad) - 1) != 0 {
            return Err(SimError::Parse("nonzero padding bits".into()));
        }
        Self::new((packed >> pad) as u64, width)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str, width: usize) -> Result<Self, SimError> {
        if s.chars().any(|c| c.is_ascii_uppercase()) {
            return Err(SimError::Parse("hex must be lowercase".into()));
        }
        let bytes = hex::decode(s).map_err(|e| SimError::Parse(e.to_string()))?;
        Self::from_bytes(&bytes, width)
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.width() {
            f.write_str(if self.bit(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVec({self})")
    }
}

/// Parses a string of `0`/`1` characters; the width is the string length.
impl FromStr for BitVec {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(SimError::Parse(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_bits(&bits)
    }
}

/// Packs an arbitrary-length bit sequence with the same rule as [`BitVec::to_bytes`].
pub fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

/// Inverse of [`pack_bits`]; rejects wrong lengths and nonzero padding.
pub fn unpack_bits(bytes: &[u8], len: usize) -> Result<Vec<bool>, SimError> {
    if bytes.len() != len.div_ceil(8) {
        return Err(SimError::Parse(format!(
            "expected {} bytes for {len} bits, got {}",
            len.div_ceil(8),
            bytes.len()
        )));
    }
    let bits: Vec<bool> = (0..bytes.len() * 8)
        .map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0)
        .collect();
    if bits[len..].iter().any(|&b| b) {
        return Err(SimError::Parse("nonzero padding bits".into()));
    }
    Ok(bits[..len].to_vec())
}

/// `(|0,x0> + |1,x1>)/sqrt(2)`: the wallet's half of one puzzle.
///
/// Measurements take `&mut self` and flip `consumed`; any later measurement
/// fails. The type is deliberately not `Clone`.
#[derive(PartialEq, Eq)]
pub struct ClawState {
    x0: BitVec,
    x1: BitVec,
    consumed: bool,
}

impl fmt::Debug for ClawState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClawState")
            .field("width", &self.width())
            .field("consumed", &self.consumed)
            .finish_non_exhaustive()
    }
}

impl ClawState {
    pub fn new(x0: BitVec, x1: BitVec) -> Result<Self, SimError> {
        x0.same_width(&x1)?;
        if x0 == x1 {
            return Err(SimError::IdenticalBranches);
        }
        Ok(Self {
            x0,
            x1,
            consumed: false,
        })
    }

    pub fn width(&self) -> usize {
        self.x0.width()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    fn take(&mut self) -> Result<(), SimError> {
        if self.consumed {
            return Err(SimError::Consumed);
        }
        self.consumed = true;
        Ok(())
    }

    /// Measures both registers in the computational basis.
    pub fn measure_standard<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<(bool, BitVec), SimError> {
        Ok(self.collapse(rng)?.measure_standard())
    }

    /// Standard-basis measurement that hands back the post-measurement state.
    pub fn collapse<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<BasisState, SimError> {
        self.take()?;
        let branch: bool = rng.gen();
        let x = if branch { self.x1 } else { self.x0 };
        Ok(BasisState {
            i: branch,
            x,
            consumed: false,
        })
    }

    /// Applies `H` to all `w + 1` qubits and measures: returns `(i, d)` with
    /// `d` uniform and `i = d . (x0 xor x1)`.
    pub fn measure_hadamard<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<(bool, BitVec), SimError> {
        self.take()?;
        let d = BitVec::random(self.width(), rng)?;
        let i = d.dot(&self.x0.xor(&self.x1)?)?;
        Ok((i, d))
    }

    /// Branch labels, for persisting a simulated wallet. Not a physical
    /// operation.
    pub fn simulator_branches(&self) -> (BitVec, BitVec) {
        (self.x0, self.x1)
    }

    /// Rebuilds a state from persisted simulator data.
    pub fn simulator_restore(x0: BitVec, x1: BitVec, consumed: bool) -> Result<Self, SimError> {
        let mut s = Self::new(x0, x1)?;
        s.consumed = consumed;
        Ok(s)
    }
}

/// A computational-basis state `|i, x>` left behind by a standard measurement.
#[derive(Debug, PartialEq, Eq)]
pub struct BasisState {
    i: bool,
    x: BitVec,
    consumed: bool,
}

impl BasisState {
    /// Reading a basis state in its own basis does not disturb it.
    pub fn measure_standard(&self) -> (bool, BitVec) {
        (self.i, self.x)
    }

    /// Every Hadamard-basis outcome is equally likely for a basis state.
    pub fn measure_hadamard<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<(bool, BitVec), SimError> {
        if self.consumed {
            return Err(SimError::Consumed);
        }
        self.consumed = true;
        Ok((rng.gen(), BitVec::random(self.x.width(), rng)?))
    }
}

/// Full statevector over `qubits` qubits; label bit `qubits - 1` is the
/// leading (branch) qubit, so a claw label is `(i << w) | x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    qubits: usize,
    amps: Vec<Complex64>,
}

impl DenseState {
    pub fn from_amplitudes(qubits: usize, amps: Vec<Complex64>) -> Result<Self, SimError> {
        if qubits == 0 || qubits > MAX_DENSE_WIDTH + 1 {
            return Err(SimError::DenseTooWide(qubits.saturating_sub(1)));
        }
        if amps.len() != 1 << qubits {
            return Err(SimError::WidthMismatch {
                left: 1 << qubits,
                right: amps.len(),
            });
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(SimError::NotNormalized(norm));
        }
        Ok(Self { qubits, amps })
    }

    pub fn basis(qubits: usize, label: usize) -> Result<Self, SimError> {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << qubits.min(MAX_DENSE_WIDTH + 1)];
        if label >= amps.len() {
            return Err(SimError::ValueTooWide(qubits));
        }
        amps[label] = Complex64::new(1.0, 0.0);
        Self::from_amplitudes(qubits, amps)
    }

    /// Dense form of the claw state over `w + 1` qubits.
    pub fn from_claw(x0: &BitVec, x1: &BitVec) -> Result<Self, SimError> {
        x0.same_width(x1)?;
        let w = x0.width();
        if w > MAX_DENSE_WIDTH {
            return Err(SimError::DenseTooWide(w));
        }
        if x0 == x1 {
            return Err(SimError::IdenticalBranches);
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << (w + 1)];
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        amps[x0.value() as usize] = h;
        amps[(1 << w) | x1.value() as usize] = h;
        Self::from_amplitudes(w + 1, amps)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitude(&self, label: usize) -> Complex64 {
        self.amps[label]
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `H` on every qubit (normalized fast Walsh-Hadamard transform).
    pub fn hadamard(&self) -> DenseState {
        let mut amps = self.amps.clone();
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let mut half = 1;
        while half < amps.len() {
            for block in (0..amps.len()).step_by(2 * half) {
                for j in block..block + half {
                    let (a, b) = (amps[j], amps[j + half]);
                    amps[j] = (a + b) * scale;
                    amps[j + half] = (a - b) * scale;
                }
            }
            half *= 2;
        }
        DenseState {
            qubits: self.qubits,
            amps,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut r: f64 = rng.gen();
        let mut last_nonzero = 0;
        for (label, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            last_nonzero = label;
            if r < p {
                return label;
            }
            r -= p;
        }
        // rounding left a sliver of mass past the end
        last_nonzero
    }
}
