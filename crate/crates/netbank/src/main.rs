use std::io::Write;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use semiqm_core::money_private::{full_cverify_user, full_mint_user, replay_user, Params, PrivateBank};
use semiqm_core::money_public::{p_cverify_user, p_mint_user, p_qverify, PublicBank, PublicKeyBundle, SpentSerialDB};
use semiqm_core::protocol::{BankLink, ProtocolError};
use semiqm_games::adversary::counterfeit::{
    CiphertextTamper, HonestMany, HonestManyThenReplay, HonestOnce, MeasureBoth, Replay,
};
use semiqm_games::adversary::solve2::{CollapsedSolver, EquationFirstSolver, RandomSolver};
use semiqm_games::adversary::Counterfeiter;
use semiqm_games::referee::{trial_rng, Caps};
use semiqm_games::{
    play_counterfeit, run_counterfeit_2of2, run_counterfeit_full, run_counterfeit_mini,
    run_public_exclusivity, run_public_forgery, run_solve2, run_solve2_oracle, run_solve2_vec,
    CounterfeitConfig, GameReport, Scheme, WinRule,
};
use semiqm_netbank::client::{Connector, LoopbackConnector, TcpConnector, WireLink};
use semiqm_netbank::keyfile::{public_from_json, public_to_json, BankKeys, KeyFileError};
use semiqm_netbank::service::{spawn_server, BankService, ServiceConfig};
use semiqm_netbank::store::{NoteScheme, StoreError, StoredNote, WalletStore};

const KEY_FILE: &str = "bank.key.json";
const PK_FILE: &str = "bank.pk.json";
const SPENT_DB: &str = "spent.db";
const WALLET_DIR: &str = "wallet";
const DEFAULT_LAMBDA: u32 = 16;

/// Semi-quantum money: classical bank, simulated quantum wallet.
#[derive(Parser)]
#[command(name = "semiqm", version)]
struct Cli {
    /// Directory holding the key files, the spent-serial file and the wallet.
    #[arg(long, env = "SEMIQM_HOME", default_value = ".semiqm", global = true)]
    home: PathBuf,
    /// Security parameter.
    #[arg(long, env = "SEMIQM_LAMBDA", global = true)]
    lambda: Option<u32>,
    /// Puzzles per note.
    #[arg(long, env = "SEMIQM_N", global = true)]
    n: Option<usize>,
    /// Puzzle width in bits.
    #[arg(long, env = "SEMIQM_W", global = true)]
    w: Option<usize>,
    /// Seed for all randomness this process draws.
    #[arg(long, env = "SEMIQM_SEED", global = true)]
    seed: Option<u64>,
    /// Bank address. Without it wallet commands run an in-process bank from
    /// the key file.
    #[arg(long, env = "SEMIQM_BANK", global = true)]
    bank: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate bank keys.
    Keygen,
    /// Run the bank.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Session timeout in seconds.
        #[arg(long, default_value_t = 30)]
        timeout: u64,
    },
    /// Mint a note into the wallet.
    Mint {
        /// Public-scheme note instead of a full private-scheme note.
        #[arg(long)]
        public: bool,
    },
    /// Spend a note with the bank.
    Verify { id: String },
    /// Show the wallet's notes.
    List,
    /// Move a public-scheme note to another wallet directory.
    Transfer {
        id: String,
        #[arg(long)]
        to: PathBuf,
    },
    /// Run a counterfeiting strategy against the bank.
    Attack {
        strategy: String,
        #[arg(long, default_value_t = 1)]
        trials: u64,
        #[arg(long)]
        json: bool,
    },
    /// Run a security game against in-process banks.
    Games {
        name: String,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Counterfeiting strategy for the counterfeit games.
        #[arg(long, default_value = "replay")]
        strategy: String,
        #[arg(long)]
        json: bool,
    },
}

enum Failure {
    Usage(String),
    Rejected(&'static str),
    Protocol(String),
    Storage(String),
}

impl From<ProtocolError> for Failure {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Storage(s) => Failure::Storage(s),
            other => Failure::Protocol(other.to_string()),
        }
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        Failure::Storage(e.to_string())
    }
}

impl From<KeyFileError> for Failure {
    fn from(e: KeyFileError) -> Self {
        Failure::Storage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Storage(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Rejected(word)) => {
            println!("{word}");
            ExitCode::from(2)
        }
        Err(Failure::Protocol(m)) => {
            eprintln!("protocol error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Storage(m)) => {
            eprintln!("storage error: {m}");
            ExitCode::from(4)
        }
    }
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Keygen => keygen(cli),
        Command::Serve { addr, timeout } => serve(cli, addr, *timeout),
        Command::Mint { public } => mint(cli, *public),
        Command::Verify { id } => verify(cli, id),
        Command::List => list(cli),
        Command::Transfer { id, to } => transfer(cli, id, to),
        Command::Attack { strategy, trials, json } => attack(cli, strategy, *trials, *json),
        Command::Games {
            name,
            trials,
            strategy,
            json,
        } => games(cli, name, *trials, strategy, *json),
    }
}

fn rng(cli: &Cli) -> ChaCha20Rng {
    cli.seed.map_or_else(ChaCha20Rng::from_entropy, ChaCha20Rng::seed_from_u64)
}

/// Flags and environment over `base`.
fn params(cli: &Cli, base: Option<Params>) -> Result<Params, Failure> {
    let usage = |e: semiqm_core::money_private::MoneyError| Failure::Usage(e.to_string());
    let lambda = cli.lambda.or(base.map(|p| p.lambda)).unwrap_or(DEFAULT_LAMBDA);
    let mut p = Params::new(lambda).map_err(usage)?;
    if cli.lambda.is_none() {
        if let Some(b) = base {
            p = p.with_n(b.n).map_err(usage)?.with_w(b.w).map_err(usage)?;
        }
    } else if let Some(b) = base {
        p = p.with_w(b.w).map_err(usage)?;
    }
    if let Some(n) = cli.n {
        p = p.with_n(n).map_err(usage)?;
    }
    if let Some(w) = cli.w {
        p = p.with_w(w).map_err(usage)?;
    }
    Ok(p)
}

fn load_keys(cli: &Cli) -> Result<BankKeys, Failure> {
    let mut keys = BankKeys::load(&cli.home.join(KEY_FILE))?;
    keys.params = params(cli, Some(keys.params))?;
    Ok(keys)
}

fn load_pk(cli: &Cli) -> Result<PublicKeyBundle, Failure> {
    let text = std::fs::read_to_string(cli.home.join(PK_FILE))?;
    Ok(public_from_json(&text)?)
}

fn bank_service(cli: &Cli, keys: BankKeys, timeout: Duration) -> Result<BankService, Failure> {
    let db = SpentSerialDB::open(cli.home.join(SPENT_DB)).map_err(|e| Failure::Storage(e.to_string()))?;
    let pk = keys.public_bundle();
    let private = PrivateBank::full(keys.full_key, keys.params);
    let public = PublicBank::new(pk, keys.sig, db);
    Ok(BankService::new(
        Some(Arc::new(private)),
        Some(Arc::new(public)),
        ServiceConfig {
            session_timeout: timeout,
            seed: cli.seed,
        },
    ))
}

fn resolve(addr: &str) -> Result<SocketAddr, Failure> {
    addr.to_socket_addrs()
        .map_err(|e| Failure::Usage(format!("bank address {addr}: {e}")))?
        .next()
        .ok_or_else(|| Failure::Usage(format!("bank address {addr} does not resolve")))
}

/// The bank the wallet talks to: remote when `--bank` is set, otherwise an
/// in-process service over the key file.
fn connector(cli: &Cli) -> Result<Box<dyn Connector>, Failure> {
    match &cli.bank {
        Some(addr) => Ok(Box::new(TcpConnector::new(resolve(addr)?))),
        None => {
            let keys = load_keys(cli)?;
            let service = bank_service(cli, keys, Duration::from_secs(30))?;
            Ok(Box::new(LoopbackConnector::new(Arc::new(service))))
        }
    }
}

fn link(cli: &Cli, rng: &mut ChaCha20Rng) -> Result<WireLink<Box<dyn Connector>>, Failure> {
    let session_rng = ChaCha20Rng::from_rng(rng).expect("chacha reseed");
    Ok(WireLink::new(connector(cli)?, session_rng))
}

fn keygen(cli: &Cli) -> CliResult {
    let params = params(cli, None)?;
    std::fs::create_dir_all(&cli.home)?;
    let keys = BankKeys::generate(params, &mut rng(cli));
    keys.save(&cli.home.join(KEY_FILE))?;
    std::fs::write(cli.home.join(PK_FILE), public_to_json(&keys.public_bundle()))?;
    println!(
        "wrote {} (lambda={} n={} w={})",
        cli.home.join(KEY_FILE).display(),
        params.lambda,
        params.n,
        params.w
    );
    Ok(())
}

fn serve(cli: &Cli, addr: &str, timeout: u64) -> CliResult {
    let keys = load_keys(cli)?;
    let params = keys.params;
    let service = Arc::new(bank_service(cli, keys, Duration::from_secs(timeout.max(1)))?);
    let server = spawn_server(addr, service).map_err(|e| Failure::Usage(format!("bind {addr}: {e}")))?;
    println!("listening on {} (n={} w={})", server.addr(), params.n, params.w);
    std::io::stdout().flush()?;
    server.join();
    Ok(())
}

fn wallet(cli: &Cli) -> Result<WalletStore, Failure> {
    Ok(WalletStore::open(cli.home.join(WALLET_DIR))?)
}

fn mint(cli: &Cli, public: bool) -> CliResult {
    let store = wallet(cli)?;
    let mut rng = rng(cli);
    let mut link = link(cli, &mut rng)?;
    let mut conv = link.open()?;
    let note = if public {
        let pk = load_pk(cli)?;
        StoredNote::Public(p_mint_user(conv.as_mut(), &pk, &mut rng)?)
    } else {
        StoredNote::Full {
            note: full_mint_user(conv.as_mut(), &mut rng)?,
            last_verify: None,
        }
    };
    let id = store.insert(&note)?;
    println!("{id}");
    Ok(())
}

fn verify(cli: &Cli, id: &str) -> CliResult {
    let store = wallet(cli)?;
    let scheme = store.scheme(id)?;
    let suite = match scheme {
        NoteScheme::Public => Some(load_pk(cli)?.suite),
        NoteScheme::Full => None,
    };
    let note = store.load(id, suite.as_ref())?;
    let mut rng = rng(cli);
    let mut link = link(cli, &mut rng)?;
    match note {
        StoredNote::Full {
            mut note,
            last_verify,
        } => {
            if note.note.is_spent() {
                let Some(t) = last_verify else {
                    return Err(Failure::Rejected("NOTE_BURNED"));
                };
                let ok = replay_user(link.open()?.as_mut(), Some(&note.wrapped), &t)?;
                return verdict(ok);
            }
            let result = link
                .open()
                .and_then(|mut conv| full_cverify_user(conv.as_mut(), &mut note, &mut rng));
            let burned = note.note.is_spent();
            let (accepted, transcript) = match result {
                Ok(out) => (out.accepted, out.transcript),
                Err(e) if burned => {
                    eprintln!("{e}");
                    (false, None)
                }
                Err(e) => return Err(e.into()),
            };
            store.update(
                id,
                &StoredNote::Full {
                    note,
                    last_verify: transcript.clone(),
                },
            )?;
            if burned && transcript.is_none() {
                return Err(Failure::Rejected("NOTE_BURNED"));
            }
            verdict(accepted)
        }
        StoredNote::Public(mut note) => {
            if note.bolt.is_consumed() {
                return Err(Failure::Rejected("NOTE_BURNED"));
            }
            let suite = suite.expect("public suite loaded");
            let result = link
                .open()
                .and_then(|mut conv| p_cverify_user(conv.as_mut(), &mut note, &suite));
            let burned = note.bolt.is_consumed();
            if burned {
                store.update(id, &StoredNote::Public(note))?;
            }
            match result {
                Ok(ok) => verdict(ok),
                Err(e) if burned => {
                    eprintln!("{e}");
                    Err(Failure::Rejected("NOTE_BURNED"))
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

fn verdict(accepted: bool) -> CliResult {
    if accepted {
        println!("ACCEPTED");
        Ok(())
    } else {
        Err(Failure::Rejected("REJECTED"))
    }
}

fn list(cli: &Cli) -> CliResult {
    let store = wallet(cli)?;
    let pk = load_pk(cli).ok();
    for s in store.list()? {
        let mut line = format!(
            "{} {} {}",
            s.id,
            s.scheme.as_str(),
            if s.consumed { "consumed" } else { "fresh" }
        );
        if s.scheme == NoteScheme::Public && !s.consumed {
            if let (Some(pk), Ok(StoredNote::Public(n))) = (&pk, store.load(&s.id, pk.as_ref().map(|p| &p.suite))) {
                line.push_str(if p_qverify(pk, &n) { " qverify=ok" } else { " qverify=FAIL" });
            }
        }
        println!("{line}");
    }
    Ok(())
}

fn transfer(cli: &Cli, id: &str, to: &Path) -> CliResult {
    let store = wallet(cli)?;
    if store.scheme(id)? != NoteScheme::Public {
        return Err(Failure::Usage("only public-scheme notes can be transferred".into()));
    }
    let pk = load_pk(cli)?;
    let note = store.load(id, Some(&pk.suite))?;
    let dest = WalletStore::open(to)?;
    dest.insert(&note)?;
    store.remove(id)?;
    println!("moved {id} to {}", to.display());
    Ok(())
}

fn counterfeiter(name: &str) -> Result<(Box<dyn Counterfeiter>, WinRule, Caps), Failure> {
    let caps = |mints, verifies| Caps { mints, verifies };
    Ok(match name {
        "honest" => (Box::new(HonestOnce), WinRule::TwoOfTwo, caps(1, 2)),
        "replay" => (Box::new(Replay { replays: 1 }), WinRule::TwoOfTwo, caps(1, 2)),
        "measure-both" => (Box::new(MeasureBoth), WinRule::TwoOfTwo, caps(1, 2)),
        "replay-many" => (Box::new(Replay { replays: 63 }), WinRule::Mini, caps(1, 64)),
        "honest-many" => (Box::new(HonestMany { notes: 5 }), WinRule::Full, caps(5, 5)),
        "honest-many-then-replay" => (Box::new(HonestManyThenReplay { notes: 5 }), WinRule::Full, caps(5, 10)),
        "tamper" => (Box::new(CiphertextTamper), WinRule::Full, caps(1, 1)),
        other => {
            return Err(Failure::Usage(format!(
                "unknown strategy {other:?} (honest, replay, measure-both, replay-many, honest-many, honest-many-then-replay, tamper)"
            )))
        }
    })
}

fn emit(report: &GameReport, json: bool) {
    if json {
        println!("{}", report.to_json());
    } else {
        println!("{}", report.summary());
    }
}

fn attack(cli: &Cli, strategy: &str, trials: u64, json: bool) -> CliResult {
    let (strategy, rule, caps) = counterfeiter(strategy)?;
    let seed = cli.seed.unwrap_or_else(rand::random);
    let params = match &cli.bank {
        Some(_) => params(cli, None)?,
        None => load_keys(cli)?.params,
    };
    let config = CounterfeitConfig {
        params,
        scheme: Scheme::Full,
        caps,
    };
    let mut outcomes = Vec::new();
    let mut errors = 0;
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let link = link(cli, &mut rng)?;
        let (outcome, aborted) = play_counterfeit(strategy.as_ref(), link, config, rule, t, &mut rng);
        outcomes.push(outcome);
        errors += aborted as u64;
    }
    let checks = [("strategy_errors".to_string(), errors)].into_iter().collect();
    emit(&GameReport::from_outcomes("attack", strategy.name(), seed, outcomes, checks), json);
    Ok(())
}

fn games(cli: &Cli, name: &str, trials: u64, strategy: &str, json: bool) -> CliResult {
    let seed = cli.seed.unwrap_or(0);
    let w = cli.w.unwrap_or(16);
    let n = cli.n.unwrap_or(8);
    let p = params(cli, None)?.with_n(n).and_then(|p| p.with_w(w)).map_err(|e| Failure::Usage(e.to_string()))?;
    let report = match name {
        "solve2" | "solve2-collapsed" => run_solve2(&CollapsedSolver, w, trials, seed),
        "solve2-random" => run_solve2(&RandomSolver, w, trials, seed),
        "solve2-equation" => run_solve2(&EquationFirstSolver, w, trials, seed),
        "solve2-oracle" => run_solve2_oracle(w, trials, seed),
        "solve2-vec" => run_solve2_vec(&CollapsedSolver, n, w, trials, seed),
        "counterfeit-2of2" | "counterfeit-mini" | "counterfeit-full" => {
            let (s, _, caps) = counterfeiter(strategy)?;
            match name {
                "counterfeit-2of2" => run_counterfeit_2of2(s.as_ref(), p, Scheme::Full, trials, seed),
                "counterfeit-mini" => run_counterfeit_mini(s.as_ref(), p, Scheme::Full, caps.verifies, trials, seed),
                _ => run_counterfeit_full(s.as_ref(), p, caps, trials, seed),
            }
        }
        "public-exclusivity" => run_public_exclusivity(trials, 40, seed),
        "public-forgery" => run_public_forgery(trials, seed),
        other => {
            return Err(Failure::Usage(format!(
                "unknown game {other:?} (solve2, solve2-random, solve2-equation, solve2-oracle, solve2-vec, \
                 counterfeit-2of2, counterfeit-mini, counterfeit-full, public-exclusivity, public-forgery)"
            )))
        }
    };
    emit(&report, json);
    Ok(())
}
