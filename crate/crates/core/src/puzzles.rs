//! 1-of-2 puzzles built from the claw-free family, and their repetitions.
//!
//! A puzzle `p` comes with a verification key `v`. The obligation step leaves
//! the solver holding a claw state and the image `o` it collapsed to. That
//! one state can answer challenge `b = 0` (a preimage) or `b = 1` (an
//! equation `d` with `d . (x0 xor x1) = i`), but not both.
//!
//! Two repetition forms exist: the `_n` functions share one challenge bit
//! across all components, the `_vec` functions take a bit per component.

use rand::{CryptoRng, Rng};
use thiserror::Error;

use crate::ntcf::{self, FunctionKey, Image, NtcfError, Trapdoor};
use crate::qsim::{BitVec, ClawState, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PuzzleError {
    #[error(transparent)]
    Ntcf(#[from] NtcfError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("length mismatch: expected {expected} components, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("hardness parameter must lie in (0, 1), got {0}")]
    InvalidHardness(f64),
    #[error("security parameter must be positive")]
    InvalidLambda,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Puzzle {
    key: FunctionKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerKey {
    trapdoor: Trapdoor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Obligation(pub Image);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnswerKind {
    Preimage,
    Equation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Answer {
    pub i: bool,
    pub payload: BitVec,
    pub kind: AnswerKind,
}

impl Puzzle {
    pub fn from_key(key: FunctionKey) -> Self {
        Self { key }
    }

    pub fn key(&self) -> &FunctionKey {
        &self.key
    }

    pub fn width(&self) -> usize {
        self.key.width()
    }
}

impl VerKey {
    pub fn from_trapdoor(trapdoor: Trapdoor) -> Self {
        Self { trapdoor }
    }

    pub fn trapdoor(&self) -> &Trapdoor {
        &self.trapdoor
    }

    /// Whether this verification key was generated alongside `p`.
    pub fn matches(&self, p: &Puzzle) -> bool {
        self.trapdoor.function_key() == p.key
    }
}

impl Obligation {
    pub fn width(&self) -> usize {
        self.0 .0.width()
    }
}

pub fn gen<R: Rng + CryptoRng + ?Sized>(w: usize, rng: &mut R) -> Result<(Puzzle, VerKey), PuzzleError> {
    let (key, trapdoor) = ntcf::keygen(w, rng)?;
    Ok((Puzzle { key }, VerKey { trapdoor }))
}

/// Prepares a claw state and reports its image.
///
/// Sampling `y` uniformly and attaching its two preimages has the same
/// distribution as superposing `(b, x)`, evaluating, and measuring the image
/// register, since the family is exactly 2-to-1 onto `{0,1}^w`.
pub fn obligate<R: Rng + ?Sized>(p: &Puzzle, rng: &mut R) -> (Obligation, ClawState) {
    let y = Image(BitVec::random(p.width(), rng).expect("puzzle width is valid"));
    let (x0, x1) = p
        .key
        .physics_trapdoor()
        .claw_of(&y)
        .expect("image width matches key");
    let state = ClawState::new(x0, x1).expect("claw branches differ by a nonzero shift");
    (Obligation(y), state)
}

/// Answers challenge `b` by measuring the state in the matching basis.
pub fn solve<R: Rng + ?Sized>(
    p: &Puzzle,
    o: &Obligation,
    state: &mut ClawState,
    b: bool,
    rng: &mut R,
) -> Result<Answer, PuzzleError> {
    if state.width() != p.width() || o.width() != p.width() {
        return Err(SimError::WidthMismatch {
            left: p.width(),
            right: state.width(),
        }
        .into());
    }
    respond(state, b, rng)
}

/// Measures `state` in the basis challenge `b` asks for. The puzzle and the
/// obligation play no part in answering.
pub fn respond<R: Rng + ?Sized>(state: &mut ClawState, b: bool, rng: &mut R) -> Result<Answer, PuzzleError> {
    let answer = if b {
        let (i, d) = state.measure_hadamard(rng)?;
        Answer {
            i,
            payload: d,
            kind: AnswerKind::Equation,
        }
    } else {
        let (i, x) = state.measure_standard(rng)?;
        Answer {
            i,
            payload: x,
            kind: AnswerKind::Preimage,
        }
    };
    Ok(answer)
}

/// `V(p, v, o, b, a)`. Total: anything malformed is rejected.
pub fn verify(p: &Puzzle, v: &VerKey, o: &Obligation, b: bool, a: &Answer) -> bool {
    let w = p.width();
    if o.width() != w || a.payload.width() != w || v.trapdoor.width() != w {
        return false;
    }
    let Ok((x0, x1)) = v.trapdoor.claw_of(&o.0) else {
        return false;
    };
    match (b, a.kind) {
        (false, AnswerKind::Preimage) => a.payload == if a.i { x1 } else { x0 },
        (true, AnswerKind::Equation) => {
            let d = &a.payload;
            let good = v.trapdoor.good_set_member(false, &x0, d)
                && v.trapdoor.good_set_member(true, &x1, d);
            good && x0.xor(&x1).and_then(|s| d.dot(&s)).is_ok_and(|c| c == a.i)
        }
        _ => false,
    }
}

/// `V_2`: both challenges answered for one obligation.
pub fn verify2(p: &Puzzle, v: &VerKey, o: &Obligation, a0: &Answer, a1: &Answer) -> bool {
    verify(p, v, o, false, a0) && verify(p, v, o, true, a1)
}

/// The weakly verifiable view `(G, V_2)`: the same predicate as [`verify2`],
/// over a solver-chosen `(o, a0, a1)`.
pub fn weakly_verifiable_view(
    p: &Puzzle,
    v: &VerKey,
    (o, a0, a1): (&Obligation, &Answer, &Answer),
) -> bool {
    verify2(p, v, o, a0, a1)
}

fn same_len(expected: usize, got: usize) -> Result<(), PuzzleError> {
    if expected != got {
        return Err(PuzzleError::LengthMismatch { expected, got });
    }
    Ok(())
}

pub fn gen_n<R: Rng + CryptoRng + ?Sized>(
    n: usize,
    w: usize,
    rng: &mut R,
) -> Result<(Vec<Puzzle>, Vec<VerKey>), PuzzleError> {
    let mut puzzles = Vec::with_capacity(n);
    let mut verkeys = Vec::with_capacity(n);
    for _ in 0..n {
        let (p, v) = gen(w, rng)?;
        puzzles.push(p);
        verkeys.push(v);
    }
    Ok((puzzles, verkeys))
}

pub fn obligate_n<R: Rng + ?Sized>(puzzles: &[Puzzle], rng: &mut R) -> (Vec<Obligation>, Vec<ClawState>) {
    puzzles.iter().map(|p| obligate(p, rng)).unzip()
}

/// Componentwise solve with one shared challenge bit.
pub fn solve_n<R: Rng + ?Sized>(
    puzzles: &[Puzzle],
    obligations: &[Obligation],
    states: &mut [ClawState],
    b: bool,
    rng: &mut R,
) -> Result<Vec<Answer>, PuzzleError> {
    solve_vec(puzzles, obligations, states, &vec![b; puzzles.len()], rng)
}

/// Conjunction of component verifications with one shared challenge bit.
pub fn verify_n(
    puzzles: &[Puzzle],
    verkeys: &[VerKey],
    obligations: &[Obligation],
    b: bool,
    answers: &[Answer],
) -> Result<bool, PuzzleError> {
    verify_vec(puzzles, verkeys, obligations, &vec![b; puzzles.len()], answers)
}

/// Componentwise solve with a challenge bit per component.
pub fn solve_vec<R: Rng + ?Sized>(
    puzzles: &[Puzzle],
    obligations: &[Obligation],
    states: &mut [ClawState],
    challenge: &[bool],
    rng: &mut R,
) -> Result<Vec<Answer>, PuzzleError> {
    let n = puzzles.len();
    same_len(n, obligations.len())?;
    same_len(n, states.len())?;
    same_len(n, challenge.len())?;
    puzzles
        .iter()
        .zip(obligations)
        .zip(states.iter_mut())
        .zip(challenge)
        .map(|(((p, o), s), &b)| solve(p, o, s, b, rng))
        .collect()
}

pub fn verify_vec(
    puzzles: &[Puzzle],
    verkeys: &[VerKey],
    obligations: &[Obligation],
    challenge: &[bool],
    answers: &[Answer],
) -> Result<bool, PuzzleError> {
    let n = puzzles.len();
    same_len(n, verkeys.len())?;
    same_len(n, obligations.len())?;
    same_len(n, challenge.len())?;
    same_len(n, answers.len())?;
    // evaluate every component, no short circuit
    Ok(puzzles
        .iter()
        .zip(verkeys)
        .zip(obligations)
        .zip(challenge)
        .zip(answers)
        .map(|((((p, v), o), &b), a)| verify(p, v, o, b, a))
        .fold(true, |acc, r| acc & r))
}

/// Repetitions needed to turn an `h`-hard puzzle into a strong one:
/// `ceil(log2(lambda)^2 / log2(1/h))`.
pub fn strong_repetition_count(h: f64, lambda: u64) -> Result<usize, PuzzleError> {
    if !(h > 0.0 && h < 1.0) {
        return Err(PuzzleError::InvalidHardness(h));
    }
    if lambda == 0 {
        return Err(PuzzleError::InvalidLambda);
    }
    let log_lambda = (lambda as f64).log2();
    let n = log_lambda * log_lambda / (1.0 / h).log2();
    // absorb float noise so exact integers are not bumped up
    Ok(((n - 1e-9).ceil().max(0.0)) as usize)
}
