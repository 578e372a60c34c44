use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use semiqm_core::money_private::WrappedKey;
use semiqm_core::money_public::{Certificate, Serial};
use semiqm_core::ntcf::Image;
use semiqm_core::primitives::{Ciphertext, Tag};
use semiqm_core::protocol::{Msg, MsgType};
use semiqm_core::puzzles::{self, Answer, AnswerKind, Obligation};
use semiqm_core::qsim::BitVec;
use semiqm_netbank::wire::{decode, encode, SessionId, WireMessage};

fn bytes(rng: &mut ChaCha20Rng, len: usize) -> Vec<u8> {
    let mut v = vec![0; len];
    rng.fill_bytes(&mut v);
    v
}

fn obligation(rng: &mut ChaCha20Rng, w: usize) -> Obligation {
    Obligation(Image(BitVec::random(w, rng).unwrap()))
}

fn wrapped(rng: &mut ChaCha20Rng) -> Option<WrappedKey> {
    rng.gen::<bool>().then(|| {
        let len = rng.gen_range(0..200);
        WrappedKey {
            ciphertext: Ciphertext {
                nonce: rng.gen(),
                body: bytes(rng, len),
            },
            tag: Tag(rng.gen()),
        }
    })
}

fn message(kind: MsgType, rng: &mut ChaCha20Rng, n: usize, w: usize) -> Msg {
    match kind {
        MsgType::MintInit => Msg::MintInit,
        MsgType::Puzzles => Msg::Puzzles {
            puzzles: (0..n).map(|_| puzzles::gen(w, rng).unwrap().0).collect(),
        },
        MsgType::Obligations => Msg::Obligations {
            obligations: (0..n).map(|_| obligation(rng, w)).collect(),
        },
        MsgType::TagNote => Msg::TagNote {
            tag: Tag(rng.gen()),
            wrapped: wrapped(rng),
        },
        MsgType::VerifyInit => Msg::VerifyInit { wrapped: wrapped(rng) },
        MsgType::Challenge => Msg::Challenge {
            bits: (0..n * 3).map(|_| rng.gen()).collect(),
        },
        MsgType::Answers => Msg::Answers {
            answers: (0..n)
                .map(|_| Answer {
                    i: rng.gen(),
                    payload: BitVec::random(w, rng).unwrap(),
                    kind: if rng.gen() {
                        AnswerKind::Preimage
                    } else {
                        AnswerKind::Equation
                    },
                })
                .collect(),
            obligations: (0..n).map(|_| obligation(rng, w)).collect(),
            tag: Tag(rng.gen()),
        },
        MsgType::Result => Msg::Result { accepted: rng.gen() },
        MsgType::PMintSerial => Msg::PMintSerial { serial: Serial(rng.gen()) },
        MsgType::PSignature => Msg::PSignature {
            signature: bytes(rng, 64),
        },
        MsgType::PSpend => Msg::PSpend {
            serial: Serial(rng.gen()),
            signature: bytes(rng, 64),
            certificate: Certificate(rng.gen()),
        },
        MsgType::Error => Msg::Error {
            reason: (0..rng.gen_range(0..40))
                .map(|_| char::from_u32(rng.gen_range(1..0x800)).unwrap_or('?'))
                .collect::<String>()
                + "\n\"\\",
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decode_inverts_encode(
        kind in 0..MsgType::ALL.len(),
        seed in any::<u64>(),
        session in any::<[u8; 16]>(),
        seq in any::<u64>(),
        n in 0usize..6,
        w in 2usize..=64,
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let msg = message(MsgType::ALL[kind], &mut rng, n, w);
        let m = WireMessage { session: SessionId(session), seq, msg };
        let line = encode(&m);
        prop_assert!(!line.contains('\n'));
        let is_error = matches!(m.msg, Msg::Error { .. });
        prop_assert!(line.is_ascii() || is_error);
        prop_assert_eq!(decode(&line).unwrap(), m);
    }

    #[test]
    fn truncations_never_decode(seed in any::<u64>(), kind in 0..MsgType::ALL.len(), cut in 0.0f64..1.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let m = WireMessage {
            session: SessionId(rng.gen()),
            seq: rng.gen(),
            msg: message(MsgType::ALL[kind], &mut rng, 2, 12),
        };
        let line = encode(&m);
        let end = (line.len() as f64 * cut) as usize;
        if line.is_char_boundary(end) && end < line.len() {
            prop_assert!(decode(&line[..end]).is_err());
        }
    }
}

#[test]
fn every_type_name_is_on_the_wire() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for kind in MsgType::ALL {
        let m = WireMessage {
            session: SessionId([7; 16]),
            seq: 0,
            msg: message(kind, &mut rng, 1, 9),
        };
        assert!(encode(&m).contains(&format!("\"type\":\"{}\"", kind.as_str())));
    }
}
