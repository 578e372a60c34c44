//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::collections::HashMap;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use semiqm_core::money_private::{full_cverify_user, full_mint_user, replay_user, PrivateBank};
use semiqm_core::ntcf::{self, Image};
use semiqm_core::protocol::{BankLink, Msg};
use semiqm_core::puzzles::{self, Answer, AnswerKind};
use semiqm_core::qsim::{BitVec, ClawState, DenseState};
use semiqm_games::adversary::counterfeit::{CiphertextTamper, Replay};
use semiqm_games::adversary::solve2::CollapsedSolver;
use semiqm_games::referee::Caps;
use semiqm_games::{
    run_counterfeit_2of2, run_counterfeit_full, run_public_exclusivity, run_public_forgery, run_solve2,
    run_solve2_vec, Scheme,
};
use semiqm_netbank::client::{Connector, LineChannel, LoopbackConnector, TcpConnector, WireLink};
use semiqm_netbank::service::spawn_server;
use semiqm_netbank::wire::{self, SessionId, WireMessage};

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// `mean +- k sd` for `trials` Bernoulli(`p`) draws.
fn window(trials: u64, p: f64, k: f64) -> (f64, f64) {
    let mean = trials as f64 * p;
    let sd = (trials as f64 * p * (1.0 - p)).sqrt();
    (mean - k * sd, mean + k * sd)
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn honest_correctness() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let keys = common::keys(1, 16, 16);
    let server = spawn_server("127.0.0.1:0", common::service(&keys, dir.path(), Some(1))).unwrap();
    let mut link = WireLink::new(TcpConnector::new(server.addr()), rng(2));
    let mut wallet = rng(3);
    let start = Instant::now();
    let mut ok = 0;
    for _ in 0..1000 {
        let mut note = full_mint_user(link.open().unwrap().as_mut(), &mut wallet).unwrap();
        let out = full_cverify_user(link.open().unwrap().as_mut(), &mut note, &mut wallet).unwrap();
        ok += out.accepted as u32;
    }
    let elapsed = start.elapsed();
    server.stop();
    verdict(
        ok >= 995 && elapsed < Duration::from_secs(60),
        format!("{ok}/1000 lifecycles accepted over TCP in {:.1}s (need >= 995, < 60s)", elapsed.as_secs_f64()),
    )
}

fn replay_rate() -> Verdict {
    let start = Instant::now();
    let params = common::params(8, 16);
    let r = run_counterfeit_2of2(&Replay { replays: 1 }, params, Scheme::Mini, 20_000, 2);
    let elapsed = start.elapsed();
    verdict(
        (43..=114).contains(&r.wins) && r.voided == 0 && elapsed < Duration::from_secs(180),
        format!("{} second accepts in 20000 trials in {:.1}s (need [43, 114])", r.wins, elapsed.as_secs_f64()),
    )
}

fn measure_both_baseline() -> Verdict {
    let single = run_solve2(&CollapsedSolver, 16, 10_000, 3);
    let rate = single.win_rate();
    let vector = run_solve2_vec(&CollapsedSolver, 8, 16, 20_000, 4);
    let (lo, hi) = window(20_000, 2f64.powi(-8), 4.0);
    let wins = vector.wins as f64;
    verdict(
        (0.48..=0.52).contains(&rate) && lo <= wins && wins <= hi,
        format!(
            "single rate {rate:.4} (need [0.48, 0.52]); n=8 wins {} (need [{lo:.1}, {hi:.1}])",
            vector.wins
        ),
    )
}

fn repetition_completeness() -> Verdict {
    let (n, w, trials) = (32, 12, 2000u64);
    let mut r = rng(5);
    let mut accepted = 0u64;
    for _ in 0..trials {
        let (ps, vs) = puzzles::gen_n(n, w, &mut r).unwrap();
        let (os, mut states) = puzzles::obligate_n(&ps, &mut r);
        let b: bool = r.gen();
        let answers = puzzles::solve_n(&ps, &os, &mut states, b, &mut r).unwrap();
        accepted += puzzles::verify_n(&ps, &vs, &os, b, &answers).unwrap() as u64;
    }
    let p = (1.0 - 2f64.powi(-(w as i32))).powi(n as i32);
    let floor = trials as f64 * p - 4.0 * (trials as f64 * p * (1.0 - p)).sqrt();

    // corrupted honest runs: some components keep valid answers, some do not
    let mut mismatches = 0;
    let mut outcomes = [0u32; 2];
    for _ in 0..10_000 {
        let (ps, vs) = puzzles::gen_n(n, w, &mut r).unwrap();
        let (os, mut states) = puzzles::obligate_n(&ps, &mut r);
        let b: bool = r.gen();
        let mut answers = puzzles::solve_n(&ps, &os, &mut states, b, &mut r).unwrap();
        let corrupt = r.gen_range(0..=2);
        for _ in 0..corrupt {
            let j = r.gen_range(0..n);
            answers[j] = Answer {
                i: r.gen(),
                payload: BitVec::random(w, &mut r).unwrap(),
                kind: if r.gen() { AnswerKind::Preimage } else { AnswerKind::Equation },
            };
        }
        let joint = puzzles::verify_n(&ps, &vs, &os, b, &answers).unwrap();
        let parts = (0..n).all(|j| puzzles::verify(&ps[j], &vs[j], &os[j], b, &answers[j]));
        mismatches += (joint != parts) as u32;
        outcomes[joint as usize] += 1;
    }
    verdict(
        accepted as f64 >= floor && mismatches == 0 && outcomes[0] > 0 && outcomes[1] > 0,
        format!(
            "{accepted}/{trials} honest accepted (need >= {floor:.1}); {mismatches} conjunction mismatches in 10000 \
             ({} accepted, {} rejected)",
            outcomes[1], outcomes[0]
        ),
    )
}

fn simulator_fidelity() -> Verdict {
    let samples = 50_000;
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    let mut off_support = 0;
    for w in 2..=5usize {
        let x0 = BitVec::random(w, &mut r).unwrap();
        let x1 = loop {
            let x = BitVec::random(w, &mut r).unwrap();
            if x != x0 {
                break x;
            }
        };
        let s = x0.xor(&x1).unwrap();
        let oracle = DenseState::from_claw(&x0, &x1).unwrap().hadamard().probabilities();
        let mut counts = vec![0u64; oracle.len()];
        for _ in 0..samples {
            let mut state = ClawState::new(x0, x1).unwrap();
            let (i, d) = state.measure_hadamard(&mut r).unwrap();
            if i != d.dot(&s).unwrap() {
                off_support += 1;
            }
            counts[((i as usize) << w) | d.value() as usize] += 1;
        }
        let tv: f64 = counts
            .iter()
            .zip(&oracle)
            .map(|(&c, &p)| (c as f64 / samples as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        worst = worst.max(tv);
    }
    verdict(
        worst < 0.05 && off_support == 0,
        format!("worst TV {worst:.4} over w=2..5 (need < 0.05); {off_support} samples off the support"),
    )
}

fn ntcf_structure() -> Verdict {
    let mut r = rng(7);
    let mut failures = 0u64;
    let mut checked = 0u64;
    for w in 2..=12usize {
        for _ in 0..3 {
            let Ok((key, td)) = ntcf::keygen(w, &mut r) else {
                failures += 1;
                continue;
            };
            let mut preimages: HashMap<u64, Vec<(bool, u64)>> = HashMap::new();
            for x in BitVec::all(w).unwrap() {
                for b in [false, true] {
                    match key.eval(b, &x) {
                        Ok(y) => {
                            preimages.entry(y.0.value()).or_default().push((b, x.value()));
                            if td.invert(b, &y).ok() != Some(x) || key.check(b, &x, &y).ok() != Some(true) {
                                failures += 1;
                            }
                        }
                        Err(_) => failures += 1,
                    }
                    checked += 1;
                }
            }
            for (y, pre) in &preimages {
                let opposite = pre.len() == 2 && pre[0].0 != pre[1].0;
                let claw = td.claw_of(&Image(BitVec::new(*y, w).unwrap()));
                let claw_ok = match claw {
                    Ok((x0, x1)) => pre.contains(&(false, x0.value())) && pre.contains(&(true, x1.value())),
                    Err(_) => false,
                };
                if !opposite || !claw_ok {
                    failures += 1;
                }
            }
            if preimages.len() != 1 << w {
                failures += 1;
            }
        }
    }
    verdict(
        failures == 0,
        format!("{checked} evaluations over w=2..12, 3 keys each; {failures} failures"),
    )
}

fn tamper_rejection() -> Verdict {
    let caps = Caps { mints: 1, verifies: 1 };
    let r = run_counterfeit_full(&CiphertextTamper, common::params(8, 16), caps, 1000, 8);
    verdict(
        r.accepted == 0 && r.verified == 1000,
        format!("{} acceptances over {} tampered verifications", r.accepted, r.verified),
    )
}

fn public_exclusivity() -> Verdict {
    let r = run_public_exclusivity(1000, 40, 9);
    let events = r.check("qverify_events");
    let runs = r.check("qverify_runs");
    let forged = run_public_forgery(100_000, 10);
    let pass = r.wins == 0
        && r.check("respend_accepts") == 0
        && r.check("restarts") > 0
        && r.check("qverify_unspent_failures") == 0
        && events > 0
        && runs >= 2 * events
        && forged.wins == 0
        && forged.check("spent_serials") == 0;
    verdict(
        pass,
        format!(
            "{} double spends in 1000 interleavings ({} restarts, {} respends); qverify {runs} runs over {events} \
             checks, {} failures; {} of 100000 forged certificates accepted",
            r.wins,
            r.check("restarts"),
            r.check("respends"),
            r.check("qverify_unspent_failures"),
            forged.wins
        ),
    )
}

fn wire_determinism() -> Verdict {
    let a = common::golden_run(41);
    let b = common::golden_run(41);
    let leaked: Vec<&str> = a
        .secrets
        .iter()
        .filter(|(_, hex)| a.lines.iter().any(|l| l.contains(hex.as_str())))
        .map(|(what, _)| what.as_str())
        .collect();
    verdict(
        a.lines == b.lines && !a.lines.is_empty() && leaked.is_empty(),
        format!(
            "{} lines, identical across runs: {}; secrets on the wire: {leaked:?}",
            a.lines.len(),
            a.lines == b.lines
        ),
    )
}

/// Sends raw lines on one connection and returns the replies.
fn raw(channel: &mut dyn LineChannel, lines: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for l in lines {
        if channel.send_line(l).is_err() {
            break;
        }
        match channel.recv_line() {
            Ok(reply) => out.push(reply),
            Err(_) => break,
        }
    }
    out
}

fn bank_statelessness() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let keys = common::keys(11, 8, 12);
    let service = common::service(&keys, dir.path(), Some(11));
    let bank = service.private().unwrap().clone();
    let expected = PrivateBank::full(keys.full_key.clone(), keys.params).snapshot();
    let before = bank.snapshot();

    let mut connector = LoopbackConnector::new(service.clone());
    let mut link = WireLink::new(LoopbackConnector::new(service.clone()), rng(12));
    let mut wallet = rng(13);
    let mut notes = Vec::new();
    let mut sessions = 0;
    let mut r = rng(14);
    while sessions < 100 {
        match r.gen_range(0..6) {
            0 => {
                notes.push(full_mint_user(link.open().unwrap().as_mut(), &mut wallet).unwrap());
                sessions += 2;
            }
            1 if !notes.is_empty() => {
                let i = r.gen_range(0..notes.len());
                let note = &mut notes[i];
                if note.note.is_spent() {
                    continue;
                }
                let out = full_cverify_user(link.open().unwrap().as_mut(), note, &mut wallet).unwrap();
                if let Some(t) = out.transcript {
                    let _ = replay_user(link.open().unwrap().as_mut(), Some(&note.wrapped), &t);
                    sessions += 1;
                }
                sessions += 1;
            }
            2 if !notes.is_empty() => {
                // verify session abandoned after the challenge
                let note = &notes[r.gen_range(0..notes.len())];
                let mut conv = link.open().unwrap();
                let _ = conv.exchange(Msg::VerifyInit {
                    wrapped: Some(note.wrapped.clone()),
                });
                sessions += 1;
            }
            3 => {
                // mint session abandoned after the puzzles
                let _ = link.open().unwrap().exchange(Msg::MintInit);
                sessions += 1;
            }
            4 => {
                let sid = SessionId(r.gen());
                let mut ch = connector.connect().unwrap();
                let mint = wire::encode(&WireMessage {
                    session: sid,
                    seq: 0,
                    msg: Msg::MintInit,
                });
                let bogus = mint.replace("MINT_INIT", "OBLIGATIONS").replace("\"seq\":0", "\"seq\":1");
                raw(ch.as_mut(), &[mint.clone(), bogus, mint]);
                sessions += 1;
            }
            5 => {
                let mut ch = connector.connect().unwrap();
                raw(ch.as_mut(), &["{\"session\":".to_string(), "garbage".to_string()]);
                sessions += 1;
            }
            _ => {}
        }
    }
    drop(link);
    let after = bank.snapshot();
    let live = service.live_sessions();
    verdict(
        before == expected && after == expected && live == 0,
        format!(
            "{sessions} sessions; snapshot equals (key, config) before: {}, after: {}; {live} live sessions",
            before == expected,
            after == expected
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("honest correctness", honest_correctness),
        ("replay double-spend rate", replay_rate),
        ("measure-both 2-of-2 baseline", measure_both_baseline),
        ("parallel-repetition completeness", repetition_completeness),
        ("simulator fidelity", simulator_fidelity),
        ("NTCF structure", ntcf_structure),
        ("full-scheme tamper rejection", tamper_rejection),
        ("public-scheme exclusivity", public_exclusivity),
        ("wire determinism", wire_determinism),
        ("bank statelessness", bank_statelessness),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let label = format!("{:>2} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += !v.pass as u32;
        println!(
            "{} {label}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
        let _ = std::io::stdout().flush();
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
