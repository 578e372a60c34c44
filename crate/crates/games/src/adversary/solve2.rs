use rand::Rng;
use rand_chacha::ChaCha20Rng;

use semiqm_core::ntcf::Image;
use semiqm_core::puzzles::{self, Answer, AnswerKind, Obligation, Puzzle};
use semiqm_core::qsim::BitVec;

use super::Solve2Strategy;

fn preimage(i: bool, x: BitVec) -> Answer {
    Answer {
        i,
        payload: x,
        kind: AnswerKind::Preimage,
    }
}

fn equation(i: bool, d: BitVec) -> Answer {
    Answer {
        i,
        payload: d,
        kind: AnswerKind::Equation,
    }
}

/// Prepares a claw state, measures it in the standard basis, then applies
/// Hadamard to what is left. The preimage is always right; the equation is
/// uniform and right half the time.
#[derive(Debug, Clone, Copy, Default)]
pub struct CollapsedSolver;

impl Solve2Strategy for CollapsedSolver {
    fn name(&self) -> &'static str {
        "collapsed"
    }

    fn solve(&self, p: &Puzzle, rng: &mut ChaCha20Rng) -> (Obligation, Answer, Answer) {
        let (o, mut state) = puzzles::obligate(p, rng);
        let mut basis = state.collapse(rng).expect("fresh state");
        let (i, x) = basis.measure_standard();
        let (j, d) = basis.measure_hadamard(rng).expect("fresh basis state");
        (o, preimage(i, x), equation(j, d))
    }
}

/// Answers the equation honestly, then has to guess a preimage.
#[derive(Debug, Clone, Copy, Default)]
pub struct EquationFirstSolver;

impl Solve2Strategy for EquationFirstSolver {
    fn name(&self) -> &'static str {
        "equation-first"
    }

    fn solve(&self, p: &Puzzle, rng: &mut ChaCha20Rng) -> (Obligation, Answer, Answer) {
        let (o, mut state) = puzzles::obligate(p, rng);
        let (j, d) = state.measure_hadamard(rng).expect("fresh state");
        let guess = BitVec::random(p.width(), rng).expect("puzzle width");
        (o, preimage(rng.gen(), guess), equation(j, d))
    }
}

/// Uniform obligation and answers, no quantum state at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomSolver;

impl Solve2Strategy for RandomSolver {
    fn name(&self) -> &'static str {
        "random"
    }

    fn solve(&self, p: &Puzzle, rng: &mut ChaCha20Rng) -> (Obligation, Answer, Answer) {
        let w = p.width();
        let mut r = || BitVec::random(w, rng).expect("puzzle width");
        let (y, x, d) = (r(), r(), r());
        (
            Obligation(Image(y)),
            preimage(rng.gen(), x),
            equation(rng.gen(), d),
        )
    }
}
