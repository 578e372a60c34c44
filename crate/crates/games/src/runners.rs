//! Game drivers. Each trial gets a fresh bank and its own randomness
//! stream, so trials run in parallel and results do not depend on thread
//! count.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use semiqm_core::money_private::{full_keygen, mini_keygen, LocalBankLink, Params, PrivateBank};
use semiqm_core::money_public::{p_keygen, LocalPublicLink, PublicBank, SpentSerialDB};
use semiqm_core::protocol::BankLink;
use semiqm_core::puzzles::{self, Answer, AnswerKind};
use semiqm_core::qsim::BitVec;

use crate::adversary::public::PublicWallet;
use crate::adversary::{Arena, Counterfeiter, Solve2Strategy};
use crate::referee::{trial_rng, Caps, Ledger, RefereedLink, SessionKind};
use crate::{GameReport, Scheme, TrialOutcome};

/// Runs `f` for every trial index, spread over the available cores, and
/// returns outcomes in trial order.
pub fn par_trials<T, F>(trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(16) as u64;
    if threads <= 1 || trials < 64 {
        return (0..trials).map(f).collect();
    }
    let f = &f;
    let mut parts: Vec<Vec<(u64, T)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                scope.spawn(move || {
                    (t..trials)
                        .step_by(threads as usize)
                        .map(|i| (i, f(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("trial thread panicked"))
            .collect()
    });
    let mut all: Vec<(u64, T)> = parts.drain(..).flatten().collect();
    all.sort_by_key(|(i, _)| *i);
    all.into_iter().map(|(_, t)| t).collect()
}

fn single(trial: u64, won: bool) -> TrialOutcome {
    TrialOutcome {
        trial,
        w: won as u64,
        l: 0,
        v: 1,
        won,
        void: false,
    }
}

/// The 2-of-2 solving game: the strategy gets a puzzle and must produce an
/// obligation with answers to both challenges; the referee checks `V_2`.
pub fn run_solve2(strategy: &dyn Solve2Strategy, w: usize, trials: u64, seed: u64) -> GameReport {
    let outcomes = par_trials(trials, |t| {
        let mut rng = trial_rng(seed, t);
        let (p, v) = puzzles::gen(w, &mut rng).expect("valid width");
        let (o, a0, a1) = strategy.solve(&p, &mut rng);
        single(t, puzzles::verify2(&p, &v, &o, &a0, &a1))
    });
    GameReport::from_outcomes("solve2", strategy.name(), seed, outcomes, BTreeMap::new())
}

/// `n` independent puzzles; a trial is won only if every component passes
/// `V_2`.
pub fn run_solve2_vec(
    strategy: &dyn Solve2Strategy,
    n: usize,
    w: usize,
    trials: u64,
    seed: u64,
) -> GameReport {
    let outcomes = par_trials(trials, |t| {
        let mut rng = trial_rng(seed, t);
        let (ps, vs) = puzzles::gen_n(n, w, &mut rng).expect("valid width");
        let mut all = true;
        for (p, v) in ps.iter().zip(&vs) {
            let (o, a0, a1) = strategy.solve(p, &mut rng);
            all &= puzzles::verify2(p, v, &o, &a0, &a1);
        }
        single(t, all)
    });
    GameReport::from_outcomes("solve2-vec", strategy.name(), seed, outcomes, BTreeMap::new())
}

/// Sanity arm with trapdoor access, run by the referee itself: answers
/// both challenges from the claw.
pub fn run_solve2_oracle(w: usize, trials: u64, seed: u64) -> GameReport {
    let outcomes = par_trials(trials, |t| {
        let mut rng = trial_rng(seed, t);
        let (p, v) = puzzles::gen(w, &mut rng).expect("valid width");
        let (o, _) = puzzles::obligate(&p, &mut rng);
        let (x0, x1) = v.trapdoor().claw_of(&o.0).expect("matching width");
        let d = BitVec::random(w, &mut rng).expect("valid width");
        let a0 = Answer {
            i: false,
            payload: x0,
            kind: AnswerKind::Preimage,
        };
        let a1 = Answer {
            i: d.dot(&x0.xor(&x1).expect("same width")).expect("same width"),
            payload: d,
            kind: AnswerKind::Equation,
        };
        single(t, puzzles::verify2(&p, &v, &o, &a0, &a1))
    });
    GameReport::from_outcomes("solve2", "oracle", seed, outcomes, BTreeMap::new())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterfeitConfig {
    pub params: Params,
    pub scheme: Scheme,
    pub caps: Caps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WinRule {
    /// `w > l, l = 1, v = 2`.
    TwoOfTwo,
    /// `w > l, l = 1`.
    Mini,
    /// `w > l`.
    Full,
}

fn run_counterfeit(
    game: &str,
    rule: WinRule,
    strategy: &dyn Counterfeiter,
    config: CounterfeitConfig,
    trials: u64,
    seed: u64,
) -> GameReport {
    let results = par_trials(trials, |t| {
        let mut rng = trial_rng(seed, t);
        let mut bank_rng = ChaCha20Rng::from_rng(&mut rng).expect("reseed");
        let mut adv_rng = ChaCha20Rng::from_rng(&mut rng).expect("reseed");
        let bank = match config.scheme {
            Scheme::Mini => PrivateBank::mini(
                mini_keygen(&config.params, &mut bank_rng).expect("valid params"),
                config.params,
            ),
            Scheme::Full => PrivateBank::full(full_keygen(&mut bank_rng), config.params),
        };
        let bank = Arc::new(bank);
        let before = bank.snapshot();
        let link = LocalBankLink::new(bank.clone(), bank_rng);
        let (outcome, aborted) = play_counterfeit(strategy, link, config, rule, t, &mut adv_rng);
        (outcome, aborted, bank.snapshot() != before)
    });
    let mut checks = BTreeMap::new();
    checks.insert(
        "strategy_errors".to_string(),
        results.iter().filter(|r| r.1).count() as u64,
    );
    checks.insert(
        "bank_state_changed".to_string(),
        results.iter().filter(|r| r.2).count() as u64,
    );
    let outcomes = results.into_iter().map(|r| r.0).collect();
    GameReport::from_outcomes(game, strategy.name(), seed, outcomes, checks)
}

/// Plays one trial of `strategy` against any bank behind `link`, refereed
/// with `config.caps`. Returns the outcome and whether the strategy stopped
/// on an error.
pub fn play_counterfeit<L: BankLink>(
    strategy: &dyn Counterfeiter,
    link: L,
    config: CounterfeitConfig,
    rule: WinRule,
    trial: u64,
    rng: &mut ChaCha20Rng,
) -> (TrialOutcome, bool) {
    let mut link = RefereedLink::new(link, config.caps);
    let mut arena = Arena {
        link: &mut link,
        scheme: config.scheme,
        rng,
    };
    let aborted = strategy.play(&mut arena).is_err();
    let ledger = link.ledger();
    let ledger = ledger.borrow();
    let (w, l, v) = (ledger.wins(), ledger.minted(), ledger.verified());
    let won = !ledger.void
        && w > l
        && match rule {
            WinRule::TwoOfTwo => l == 1 && v == 2,
            WinRule::Mini => l == 1,
            WinRule::Full => true,
        };
    let outcome = TrialOutcome {
        trial,
        w: w as u64,
        l: l as u64,
        v: v as u64,
        won,
        void: ledger.void,
    };
    (outcome, aborted)
}

/// One mint and two verifications per trial.
pub fn run_counterfeit_2of2(
    strategy: &dyn Counterfeiter,
    params: Params,
    scheme: Scheme,
    trials: u64,
    seed: u64,
) -> GameReport {
    let config = CounterfeitConfig {
        params,
        scheme,
        caps: Caps {
            mints: 1,
            verifies: 2,
        },
    };
    run_counterfeit("counterfeit-2of2", WinRule::TwoOfTwo, strategy, config, trials, seed)
}

/// One mint and up to `max_verifies` verifications per trial.
pub fn run_counterfeit_mini(
    strategy: &dyn Counterfeiter,
    params: Params,
    scheme: Scheme,
    max_verifies: usize,
    trials: u64,
    seed: u64,
) -> GameReport {
    let config = CounterfeitConfig {
        params,
        scheme,
        caps: Caps {
            mints: 1,
            verifies: max_verifies,
        },
    };
    run_counterfeit("counterfeit-mini", WinRule::Mini, strategy, config, trials, seed)
}

/// Free interleaving of mints and verifications within `caps`.
pub fn run_counterfeit_full(
    strategy: &dyn Counterfeiter,
    params: Params,
    caps: Caps,
    trials: u64,
    seed: u64,
) -> GameReport {
    let config = CounterfeitConfig {
        params,
        scheme: Scheme::Full,
        caps,
    };
    run_counterfeit("counterfeit-full", WinRule::Full, strategy, config, trials, seed)
}

/// Serials the bank accepted more than once, read off the session log.
pub fn double_spent(ledger: &Ledger) -> usize {
    let mut accepted = HashMap::new();
    for s in &ledger.sessions {
        if let (SessionKind::Verify, Some(true), Some(serial)) = (s.kind, s.accepted, s.serial) {
            *accepted.entry(serial).or_insert(0usize) += 1;
        }
    }
    accepted.values().filter(|&&c| c > 1).count()
}

/// Randomized interleavings of public-scheme mints, quantum verifications,
/// spends, respends, forged spends and bank restarts. A trial is won if any
/// serial is accepted twice.
pub fn run_public_exclusivity(trials: u64, steps: usize, seed: u64) -> GameReport {
    let results = par_trials(trials, |t| {
        let mut rng = trial_rng(seed, t);
        let mut bank_rng = ChaCha20Rng::from_rng(&mut rng).expect("reseed");
        let dir = tempfile::tempdir().expect("temp dir");
        let path = dir.path().join("spent-serials");
        let (pk, sk) = p_keygen(&mut bank_rng);
        let boot = || {
            let db = SpentSerialDB::open(&path).expect("open spent-serial db");
            Arc::new(PublicBank::new(pk, sk.clone(), db))
        };
        let mut link = RefereedLink::new(LocalPublicLink::new(boot()), Caps::UNLIMITED);
        let shared = link.ledger();
        let mut wallet = PublicWallet::new(pk);
        let mut counts: BTreeMap<&'static str, u64> = BTreeMap::new();
        let mut bump = |k: &'static str, by: u64| *counts.entry(k).or_insert(0) += by;

        wallet.mint(&mut link, &mut rng).expect("mint");
        for _ in 0..steps {
            let n = wallet.notes.len();
            match rng.gen_range(0..6) {
                0 if n < 8 => wallet.mint(&mut link, &mut rng).expect("mint"),
                1 => {
                    let i = rng.gen_range(0..n);
                    if !wallet.is_spent(i) {
                        let runs = rng.gen_range(2..=4);
                        let passes = (0..runs).filter(|_| wallet.qverify(i)).count() as u64;
                        bump("qverify_events", 1);
                        bump("qverify_runs", runs);
                        bump("qverify_unspent_failures", runs - passes);
                    } else if wallet.qverify(i) {
                        bump("qverify_spent_passes", 1);
                    }
                }
                2 => {
                    let i = rng.gen_range(0..n);
                    if !wallet.is_spent(i) {
                        let ok = wallet.spend(&mut link, i).expect("spend");
                        bump("honest_spends", 1);
                        bump("honest_spend_rejections", !ok as u64);
                    }
                }
                3 if !wallet.spends.is_empty() => {
                    let j = rng.gen_range(0..wallet.spends.len());
                    let ok = wallet.respend(&mut link, j).expect("respend");
                    bump("respends", 1);
                    bump("respend_accepts", ok as u64);
                }
                4 => {
                    let i = rng.gen_range(0..n);
                    let ok = wallet.forge(&mut link, i, &mut rng).expect("forge");
                    bump("forgeries", 1);
                    bump("forgery_accepts", ok as u64);
                }
                5 => {
                    link = RefereedLink::with_ledger(LocalPublicLink::new(boot()), shared.clone());
                    bump("restarts", 1);
                }
                _ => {}
            }
        }
        let ledger = shared.borrow();
        let doubles = double_spent(&ledger);
        let outcome = TrialOutcome {
            trial: t,
            w: ledger.wins() as u64,
            l: ledger.minted() as u64,
            v: ledger.verified() as u64,
            won: doubles > 0,
            void: false,
        };
        (outcome, counts)
    });
    let mut checks = BTreeMap::new();
    for (_, counts) in &results {
        for (k, v) in counts {
            *checks.entry(k.to_string()).or_insert(0) += v;
        }
    }
    let outcomes = results.into_iter().map(|r| r.0).collect();
    GameReport::from_outcomes("public-exclusivity", "interleaved", seed, outcomes, checks)
}

/// Spends with uniformly random certificates against one bank and one
/// honestly minted note. Every trial is one attempt.
pub fn run_public_forgery(trials: u64, seed: u64) -> GameReport {
    let mut rng = trial_rng(seed, 0);
    let dir = tempfile::tempdir().expect("temp dir");
    let (pk, sk) = p_keygen(&mut rng);
    let db = SpentSerialDB::open(dir.path().join("spent-serials")).expect("open db");
    let bank = Arc::new(PublicBank::new(pk, sk, db));
    let mut link = RefereedLink::new(LocalPublicLink::new(bank.clone()), Caps::UNLIMITED);
    let mut wallet = PublicWallet::new(pk);
    wallet.mint(&mut link, &mut rng).expect("mint");
    let outcomes = (0..trials)
        .map(|t| {
            let won = wallet.forge(&mut link, 0, &mut rng).expect("forge");
            TrialOutcome {
                trial: t,
                w: won as u64,
                l: 0,
                v: 1,
                won,
                void: false,
            }
        })
        .collect();
    let mut checks = BTreeMap::new();
    checks.insert("spent_serials".to_string(), bank.spent_count() as u64);
    GameReport::from_outcomes("public-forgery", "random-certificate", seed, outcomes, checks)
}
