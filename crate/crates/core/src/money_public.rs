//! Public semi-quantum money over a quantum-lightning interface.
//!
//! The lightning instantiation is a salted hash commitment: a bolt is a
//! secret `r`, its serial `H(salt || r)`, its certificate `r` itself. It has
//! real binding but no uncloneability; bolt consumption is the same flag
//! convention as [`crate::qsim::ClawState`].
//!
//! The bank signs serials at mint and keeps a durable set of spent serials
//! for classical verification.

use std::collections::HashSet;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::{CryptoRng, Rng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::primitives::{sig_keygen, sig_verify, sign, SigKeyPair, SigPublicKey};
use crate::protocol::{BankLink, Conversation, Msg, ProtocolError};

pub const SERIAL_LEN: usize = 32;
pub const SALT_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum PublicError {
    #[error("bolt already consumed")]
    BoltConsumed,
    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },
    #[error("spent-serial database: {0}")]
    Storage(#[from] std::io::Error),
}

macro_rules! hash_newtype {
    ($name:ident) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub [u8; SERIAL_LEN]);

        impl $name {
            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, PublicError> {
                let bytes = hex::decode(s).map_err(|e| PublicError::Malformed {
                    what: stringify!($name),
                    detail: e.to_string(),
                })?;
                let arr = bytes.try_into().map_err(|b: Vec<u8>| PublicError::Malformed {
                    what: stringify!($name),
                    detail: format!("expected {SERIAL_LEN} bytes, got {}", b.len()),
                })?;
                Ok(Self(arr))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }
    };
}

hash_newtype!(Serial);
hash_newtype!(Certificate);

/// Lightning parameters: the hash salt fixed at setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LightningSuite {
    salt: [u8; SALT_LEN],
}

/// `(|psi>, s)`. Not `Clone`: one owner per bolt.
#[derive(PartialEq, Eq)]
pub struct Bolt {
    secret: [u8; SERIAL_LEN],
    serial: Serial,
    consumed: bool,
}

impl fmt::Debug for Bolt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bolt")
            .field("serial", &self.serial)
            .field("consumed", &self.consumed)
            .finish_non_exhaustive()
    }
}

pub fn ql_setup<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> LightningSuite {
    let mut salt = [0u8; SALT_LEN];
    rng.fill_bytes(&mut salt);
    LightningSuite { salt }
}

impl LightningSuite {
    pub fn from_salt(salt: [u8; SALT_LEN]) -> Self {
        Self { salt }
    }

    pub fn salt(&self) -> &[u8; SALT_LEN] {
        &self.salt
    }

    fn hash(&self, secret: &[u8; SERIAL_LEN]) -> Serial {
        let mut h = Sha256::new();
        h.update(self.salt);
        h.update(secret);
        Serial(h.finalize().into())
    }

    pub fn gen_bolt<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> Bolt {
        let mut secret = [0u8; SERIAL_LEN];
        rng.fill_bytes(&mut secret);
        Bolt {
            serial: self.hash(&secret),
            secret,
            consumed: false,
        }
    }

    /// Non-consuming.
    pub fn verify_bolt(&self, bolt: &Bolt, s: &Serial) -> bool {
        !bolt.consumed && self.hash(&bolt.secret) == *s
    }

    /// Consumes the bolt.
    pub fn gen_certificate(&self, bolt: &mut Bolt, s: &Serial) -> Result<Certificate, PublicError> {
        if bolt.consumed {
            return Err(PublicError::BoltConsumed);
        }
        bolt.consumed = true;
        let _ = s;
        Ok(Certificate(bolt.secret))
    }

    pub fn verify_certificate(&self, s: &Serial, c: &Certificate) -> bool {
        self.hash(&c.0) == *s
    }
}

impl Bolt {
    pub fn serial(&self) -> Serial {
        self.serial
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// The simulator's view of the bolt, for persisting a wallet.
    pub fn simulator_secret(&self) -> [u8; SERIAL_LEN] {
        self.secret
    }

    pub fn simulator_restore(
        suite: &LightningSuite,
        secret: [u8; SERIAL_LEN],
        consumed: bool,
    ) -> Self {
        Self {
            serial: suite.hash(&secret),
            secret,
            consumed,
        }
    }
}

/// `pk = (lightning suite, pk_sigma)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublicKeyBundle {
    pub suite: LightningSuite,
    pub sig_pk: SigPublicKey,
}

pub fn p_keygen<R: Rng + CryptoRng + ?Sized>(rng: &mut R) -> (PublicKeyBundle, SigKeyPair) {
    let suite = ql_setup(rng);
    let sk = sig_keygen(rng);
    (
        PublicKeyBundle {
            suite,
            sig_pk: sk.public(),
        },
        sk,
    )
}

/// `(bolt, s, sigma)`.
#[derive(Debug, PartialEq, Eq)]
pub struct PublicNote {
    pub bolt: Bolt,
    pub serial: Serial,
    pub signature: Vec<u8>,
}

pub fn p_mint_bank(sk: &SigKeyPair, s: &Serial) -> Vec<u8> {
    sign(sk, &s.0).to_vec()
}

pub fn p_mint_user<R: RngCore + CryptoRng + ?Sized>(
    conv: &mut dyn Conversation,
    pk: &PublicKeyBundle,
    rng: &mut R,
) -> Result<PublicNote, ProtocolError> {
    let bolt = pk.suite.gen_bolt(rng);
    let serial = bolt.serial();
    match conv.exchange(Msg::PMintSerial { serial })? {
        Msg::PSignature { signature } => Ok(PublicNote {
            bolt,
            serial,
            signature,
        }),
        other => Err(ProtocolError::unexpected("P_SIGNATURE", &other)),
    }
}

/// `r_sigma * r_b`. Leaves the note untouched.
pub fn p_qverify(pk: &PublicKeyBundle, note: &PublicNote) -> bool {
    let r_sigma = sig_verify(&pk.sig_pk, &note.serial.0, &note.signature);
    let r_b = pk.suite.verify_bolt(&note.bolt, &note.serial);
    r_sigma & r_b
}

/// Turns the bolt into a certificate and spends it at the bank.
pub fn p_cverify_user(
    conv: &mut dyn Conversation,
    note: &mut PublicNote,
    suite: &LightningSuite,
) -> Result<bool, ProtocolError> {
    let certificate = suite
        .gen_certificate(&mut note.bolt, &note.serial)
        .map_err(|_| ProtocolError::NoteConsumed)?;
    match conv.exchange(Msg::PSpend {
        serial: note.serial,
        signature: note.signature.clone(),
        certificate,
    })? {
        Msg::Result { accepted } => Ok(accepted),
        other => Err(ProtocolError::unexpected("RESULT", &other)),
    }
}

/// The set `D`, persisted as one lowercase hex serial per line.
#[derive(Debug)]
pub struct SpentSerialDB {
    path: PathBuf,
    file: File,
    spent: HashSet<Serial>,
}

impl SpentSerialDB {
    /// Opens or creates the database at `path`. A torn final line from a
    /// crash mid-append is ignored, since that insert never returned.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, PublicError> {
        let path = path.as_ref().to_path_buf();
        let mut spent = HashSet::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for line in reader.lines() {
                let line = line?;
                let line = line.trim();
                if line.is_empty() {
                    continue;
                }
                if let Ok(s) = Serial::from_hex(line) {
                    spent.insert(s);
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file, spent })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, s: &Serial) -> bool {
        self.spent.contains(s)
    }

    pub fn len(&self) -> usize {
        self.spent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spent.is_empty()
    }

    /// Inserts `s` if absent and returns whether it was. The line is
    /// flushed to disk before returning `true`.
    pub fn check_and_insert(&mut self, s: &Serial) -> Result<bool, PublicError> {
        if self.spent.contains(s) {
            return Ok(false);
        }
        // leading newline isolates any torn line left by a crash
        writeln!(self.file, "\n{}", s.to_hex())?;
        self.file.sync_all()?;
        self.spent.insert(*s);
        Ok(true)
    }
}

/// `r_sigma * r_c * r_d`, inserting `s` into `D` on success.
pub fn p_cverify_bank(
    pk: &PublicKeyBundle,
    db: &mut SpentSerialDB,
    serial: &Serial,
    signature: &[u8],
    certificate: &Certificate,
) -> Result<bool, PublicError> {
    let r_sigma = sig_verify(&pk.sig_pk, &serial.0, signature);
    let r_c = pk.suite.verify_certificate(serial, certificate);
    if !(r_sigma && r_c) {
        return Ok(false);
    }
    db.check_and_insert(serial)
}

/// The public-scheme bank. Every session is a single request.
#[derive(Debug)]
pub struct PublicBank {
    pk: PublicKeyBundle,
    sk: SigKeyPair,
    db: Mutex<SpentSerialDB>,
}

impl PublicBank {
    pub fn new(pk: PublicKeyBundle, sk: SigKeyPair, db: SpentSerialDB) -> Self {
        Self {
            pk,
            sk,
            db: Mutex::new(db),
        }
    }

    pub fn pk(&self) -> &PublicKeyBundle {
        &self.pk
    }

    pub fn spent_count(&self) -> usize {
        self.db.lock().expect("db lock").len()
    }

    /// A storage failure is an `Err`: the session is aborted and no verdict
    /// is sent.
    pub fn handle(&self, msg: Msg) -> Result<Msg, ProtocolError> {
        match msg {
            Msg::PMintSerial { serial } => Ok(Msg::PSignature {
                signature: p_mint_bank(&self.sk, &serial),
            }),
            Msg::PSpend {
                serial,
                signature,
                certificate,
            } => {
                let mut db = self.db.lock().expect("db lock");
                let accepted = p_cverify_bank(&self.pk, &mut db, &serial, &signature, &certificate)
                    .map_err(|e| ProtocolError::Storage(e.to_string()))?;
                Ok(Msg::Result { accepted })
            }
            Msg::Error { reason } => Err(ProtocolError::Aborted(reason)),
            other => Err(ProtocolError::OutOfOrder {
                expected: "P_MINT_SERIAL or P_SPEND",
                got: other.kind(),
            }),
        }
    }
}

/// In-process link to a [`PublicBank`].
pub struct LocalPublicLink {
    bank: Arc<PublicBank>,
}

impl LocalPublicLink {
    pub fn new(bank: Arc<PublicBank>) -> Self {
        Self { bank }
    }
}

struct PublicConversation {
    bank: Arc<PublicBank>,
    done: bool,
}

impl Conversation for PublicConversation {
    fn exchange(&mut self, msg: Msg) -> Result<Msg, ProtocolError> {
        if std::mem::replace(&mut self.done, true) {
            return Err(ProtocolError::Finished);
        }
        match self.bank.handle(msg) {
            Ok(reply) => Ok(reply),
            Err(e @ ProtocolError::Storage(_)) => Err(e),
            Err(e) => Ok(Msg::Error {
                reason: e.to_string(),
            }),
        }
    }
}

impl BankLink for LocalPublicLink {
    fn open(&mut self) -> Result<Box<dyn Conversation>, ProtocolError> {
        Ok(Box::new(PublicConversation {
            bank: self.bank.clone(),
            done: false,
        }))
    }
}
