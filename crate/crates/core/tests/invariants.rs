use std::collections::HashSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use semiqm_core::money_private::{
    mini_cverify_user, mini_keygen, mini_mint_user, replay_user, BankSession, LocalBankLink,
    Params, PrivateBank,
};
use semiqm_core::ntcf::{keygen, HardcoreClass, Image};
use semiqm_core::primitives::{enc_keygen, encrypt};
use semiqm_core::protocol::{BankLink, Msg};
use semiqm_core::puzzles::{self, Answer, AnswerKind, Obligation};
use semiqm_core::qsim::{BitVec, ClawState};

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn claw_inputs() -> impl Strategy<Value = (usize, u64, u64)> {
    (1usize..=64).prop_flat_map(|w| {
        let max = if w == 64 { u64::MAX } else { (1u64 << w) - 1 };
        (Just(w), 0..=max, 0..=max).prop_filter("distinct branches", |(_, a, b)| a != b)
    })
}

fn answer(w: usize) -> impl Strategy<Value = Answer> {
    let max = (1u64 << w) - 1;
    (any::<bool>(), 0..=max, any::<bool>()).prop_map(move |(i, v, eq)| Answer {
        i,
        payload: BitVec::new(v, w).unwrap(),
        kind: if eq {
            AnswerKind::Equation
        } else {
            AnswerKind::Preimage
        },
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hadamard_outcome_satisfies_equation((w, a, b) in claw_inputs(), seed in any::<u64>()) {
        let (x0, x1) = (BitVec::new(a, w).unwrap(), BitVec::new(b, w).unwrap());
        let mut state = ClawState::new(x0, x1).unwrap();
        let (i, d) = state.measure_hadamard(&mut rng(seed)).unwrap();
        prop_assert_eq!(i, d.dot(&x0.xor(&x1).unwrap()).unwrap());
        prop_assert!(state.measure_hadamard(&mut rng(seed)).is_err());
        prop_assert!(state.measure_standard(&mut rng(seed)).is_err());
    }

    #[test]
    fn standard_outcome_is_a_branch((w, a, b) in claw_inputs(), seed in any::<u64>()) {
        let (x0, x1) = (BitVec::new(a, w).unwrap(), BitVec::new(b, w).unwrap());
        let mut state = ClawState::new(x0, x1).unwrap();
        let (i, x) = state.measure_standard(&mut rng(seed)).unwrap();
        prop_assert_eq!(x, if i { x1 } else { x0 });
        prop_assert!(state.measure_standard(&mut rng(seed)).is_err());
        prop_assert!(state.measure_hadamard(&mut rng(seed)).is_err());
    }

    #[test]
    fn claw_components_differ_by_shift(w in 2usize..=32, seed in any::<u64>(), y in any::<u64>()) {
        let mut r = rng(seed);
        let (_, td) = keygen(w, &mut r).unwrap();
        let y = Image(BitVec::new(y & ((1u64 << w) - 1), w).unwrap());
        let (x0, x1) = td.claw_of(&y).unwrap();
        prop_assert_eq!(x0.xor(&x1).unwrap(), td.shift());
    }

    #[test]
    fn hardcore_flip_is_a_bijection(w in 2usize..=20, seed in any::<u64>(), x in any::<u64>(), d in any::<u64>()) {
        let mask = (1u64 << w) - 1;
        let (_, td) = keygen(w, &mut rng(seed)).unwrap();
        let x = BitVec::new(x & mask, w).unwrap();
        let d = BitVec::new(d & mask, w).unwrap();
        for b in [false, true] {
            let c = d.dot(&td.shift()).unwrap();
            let honest = td.hardcore_member(b, &x, &d, c);
            let flipped = td.hardcore_member(b, &x, &d, !c);
            if d.is_zero() {
                prop_assert_eq!(honest, HardcoreClass::Neither);
                prop_assert_eq!(flipped, HardcoreClass::Neither);
            } else {
                prop_assert_eq!(honest, HardcoreClass::InH);
                prop_assert_eq!(flipped, HardcoreClass::InHBar);
            }
        }
    }

    #[test]
    fn verify2_is_the_conjunction(seed in any::<u64>(), a0 in answer(8), a1 in answer(8), y in 0u64..256) {
        let (p, v) = puzzles::gen(8, &mut rng(seed)).unwrap();
        let o = Obligation(Image(BitVec::new(y, 8).unwrap()));
        prop_assert_eq!(
            puzzles::verify2(&p, &v, &o, &a0, &a1),
            puzzles::verify(&p, &v, &o, false, &a0) && puzzles::verify(&p, &v, &o, true, &a1)
        );
        prop_assert_eq!(
            puzzles::verify(&p, &v, &o, false, &a0),
            puzzles::verify(&p, &v, &o, false, &a0)
        );
    }

    #[test]
    fn verify2_honest_pair_from_claw(seed in any::<u64>()) {
        // both answers computed from the claw itself: the referee's view
        let mut r = rng(seed);
        let (p, v) = puzzles::gen(10, &mut r).unwrap();
        let (o, _) = puzzles::obligate(&p, &mut r);
        let (x0, x1) = v.trapdoor().claw_of(&o.0).unwrap();
        let d = BitVec::random(10, &mut r).unwrap();
        let a0 = Answer { i: false, payload: x0, kind: AnswerKind::Preimage };
        let a1 = Answer { i: d.dot(&x0.xor(&x1).unwrap()).unwrap(), payload: d, kind: AnswerKind::Equation };
        prop_assert_eq!(puzzles::verify2(&p, &v, &o, &a0, &a1), !d.is_zero());
    }

    #[test]
    fn verify_n_is_the_conjunction(
        seed in any::<u64>(),
        n in 1usize..6,
        b in any::<bool>(),
        corrupt in proptest::collection::vec(any::<bool>(), 6),
    ) {
        let mut r = rng(seed);
        let (ps, vs) = puzzles::gen_n(n, 8, &mut r).unwrap();
        let (os, mut states) = puzzles::obligate_n(&ps, &mut r);
        let mut answers = puzzles::solve_n(&ps, &os, &mut states, b, &mut r).unwrap();
        for (a, &c) in answers.iter_mut().zip(&corrupt) {
            if c {
                a.i = !a.i;
            }
        }
        let each = ps.iter().zip(&vs).zip(&os).zip(&answers)
            .all(|(((p, v), o), a)| puzzles::verify(p, v, o, b, a));
        prop_assert_eq!(puzzles::verify_n(&ps, &vs, &os, b, &answers).unwrap(), each);
    }
}

#[test]
fn encryption_nonces_never_repeat() {
    let mut r = rng(1);
    let k = enc_keygen(&mut r);
    let nonces: HashSet<_> = (0..20_000).map(|_| encrypt(&k, b"m", &mut r).nonce).collect();
    assert_eq!(nonces.len(), 20_000);
}

#[test]
fn honest_completeness_at_width_16() {
    let mut r = rng(2);
    let mut failures = 0;
    for t in 0..10_000 {
        let (p, v) = puzzles::gen(16, &mut r).unwrap();
        let (o, mut s) = puzzles::obligate(&p, &mut r);
        let b = t % 2 == 1;
        let a = puzzles::solve(&p, &o, &mut s, b, &mut r).unwrap();
        if !puzzles::verify(&p, &v, &o, b, &a) {
            assert!(b, "preimage answers always verify");
            failures += 1;
        }
    }
    assert!(failures <= 5, "{failures} honest failures");
}

fn mini_bank(seed: u64, n: usize) -> Arc<PrivateBank> {
    let params = Params::new(256).unwrap().with_n(n).unwrap().with_w(12).unwrap();
    Arc::new(PrivateBank::mini(mini_keygen(&params, &mut rng(seed)).unwrap(), params))
}

#[test]
fn replay_success_is_challenge_equality() {
    let bank = mini_bank(3, 3);
    let mut r = rng(4);
    let mut checked = 0;
    for trial in 0..300u64 {
        let mut link = LocalBankLink::new(bank.clone(), rng(1000 + trial));
        let mut note = mini_mint_user(link.open().unwrap().as_mut(), &mut r).unwrap();
        let first = mini_cverify_user(link.open().unwrap().as_mut(), &mut note, &mut r).unwrap();
        if !first.accepted {
            continue;
        }
        let t = first.transcript.unwrap();
        // replay through the bank directly so the challenge is visible
        let mut session = BankSession::new(rng(5000 + trial));
        let Msg::Challenge { bits } = bank.handle(&mut session, Msg::VerifyInit { wrapped: None }).unwrap() else {
            panic!("challenge expected");
        };
        let reply = bank
            .handle(
                &mut session,
                Msg::Answers { answers: t.answers.clone(), obligations: t.obligations.clone(), tag: t.tag },
            )
            .unwrap();
        assert_eq!(reply, Msg::Result { accepted: bits == t.challenge });
        checked += 1;
    }
    assert!(checked > 290);
}

#[test]
fn verification_is_a_pure_function_of_the_transcript() {
    let bank = mini_bank(6, 4);
    let mut r = rng(7);
    let mut link = LocalBankLink::new(bank.clone(), rng(8));
    let mut note = mini_mint_user(link.open().unwrap().as_mut(), &mut r).unwrap();
    let t = mini_cverify_user(link.open().unwrap().as_mut(), &mut note, &mut r)
        .unwrap()
        .transcript
        .unwrap();
    let run = |seed| {
        let mut link = LocalBankLink::new(bank.clone(), rng(seed));
        replay_user(link.open().unwrap().as_mut(), None, &t).unwrap()
    };
    for seed in 0..50 {
        assert_eq!(run(seed), run(seed));
    }
}
