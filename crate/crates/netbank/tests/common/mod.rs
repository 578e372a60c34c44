#![allow(dead_code)]

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use semiqm_core::money_private::{full_cverify_user, full_mint_user, MiniKey, Params, PrivateBank};
use semiqm_core::money_public::{p_cverify_user, p_mint_user, PublicBank, SpentSerialDB};
use semiqm_core::primitives::decrypt;
use semiqm_core::protocol::BankLink;
use semiqm_netbank::client::{LoopbackConnector, WireLink};
use semiqm_netbank::keyfile::BankKeys;
use semiqm_netbank::service::{BankService, ServiceConfig};

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn params(n: usize, w: usize) -> Params {
    Params::new(64).unwrap().with_n(n).unwrap().with_w(w).unwrap()
}

pub fn keys(seed: u64, n: usize, w: usize) -> BankKeys {
    BankKeys::generate(params(n, w), &mut ChaCha20Rng::seed_from_u64(seed))
}

/// A bank serving both schemes, its spent-serial file under `dir`.
pub fn service(keys: &BankKeys, dir: &Path, seed: Option<u64>) -> Arc<BankService> {
    let db = SpentSerialDB::open(dir.join("spent.db")).unwrap();
    let keys = keys.clone();
    let pk = keys.public_bundle();
    Arc::new(BankService::new(
        Some(Arc::new(PrivateBank::full(keys.full_key, keys.params))),
        Some(Arc::new(PublicBank::new(pk, keys.sig, db))),
        ServiceConfig {
            session_timeout: Duration::from_secs(30),
            seed,
        },
    ))
}

pub struct Golden {
    pub lines: Vec<String>,
    pub secrets: Vec<(String, String)>,
}

/// A seeded honest full mint+verify and public mint+spend over the
/// in-process transport.
pub fn golden_run(seed: u64) -> Golden {
    let dir = tempfile::tempdir().unwrap();
    let keys = keys(seed, 6, 12);
    let service = service(&keys, dir.path(), Some(seed));
    let log = Arc::new(Mutex::new(Vec::new()));
    let mut link = WireLink::new(LoopbackConnector::new(service).with_log(log.clone()), rng(seed + 1));
    let mut wallet_rng = rng(seed + 2);

    let mut note = full_mint_user(link.open().unwrap().as_mut(), &mut wallet_rng).unwrap();
    let out = full_cverify_user(link.open().unwrap().as_mut(), &mut note, &mut wallet_rng).unwrap();
    assert!(out.accepted);
    let pk = keys.public_bundle();
    let mut pnote = p_mint_user(link.open().unwrap().as_mut(), &pk, &mut wallet_rng).unwrap();
    assert!(p_cverify_user(link.open().unwrap().as_mut(), &mut pnote, &pk.suite).unwrap());

    let mut secrets = vec![
        ("mac key".to_string(), hex::encode(keys.full_key.mac_key.as_bytes())),
        ("enc key".to_string(), hex::encode(keys.full_key.enc_key.as_bytes())),
        ("signing key".to_string(), hex::encode(keys.sig.secret_bytes())),
    ];
    let plain = decrypt(&keys.full_key.enc_key, &note.wrapped.ciphertext);
    let mini = MiniKey::from_bytes(&plain).unwrap();
    secrets.push(("mini key".into(), hex::encode(&plain)));
    secrets.push(("mini mac key".into(), hex::encode(mini.mac_key().as_bytes())));
    for (i, v) in mini.verkeys().iter().enumerate() {
        secrets.push((format!("trapdoor {i}"), hex::encode(v.trapdoor().to_bytes())));
    }
    let lines = log.lock().unwrap().clone();
    Golden { lines, secrets }
}
