//! The wallet's note directory.
//!
//! One JSON file per note. Simulated claw states are written out with
//! their branch labels, which no physical wallet could do, so every file
//! carries a top-level `"simulated": true` and loading refuses files
//! without it.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use semiqm_core::money_private::{FullBanknote, MiniBanknote, VerifyTranscript, WrappedKey};
use semiqm_core::money_public::{Bolt, LightningSuite, PublicNote, Serial};
use semiqm_core::ntcf::Image;
use semiqm_core::primitives::{Ciphertext, Tag};
use semiqm_core::puzzles::{Answer, AnswerKind, Obligation};
use semiqm_core::qsim::{pack_bits, unpack_bits, BitVec, ClawState};

const LOCK_FILE: &str = ".lock";
const ID_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("wallet i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("wallet {0} is locked by another process (remove {0}/.lock if stale)")]
    Locked(String),
    #[error("no note {0}")]
    NotFound(String),
    #[error("note {0} already exists")]
    Exists(String),
    #[error("note {id} is corrupt: {detail}")]
    Corrupt { id: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoteScheme {
    Full,
    Public,
}

impl NoteScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            NoteScheme::Full => "full",
            NoteScheme::Public => "public",
        }
    }
}

/// A note as held by the wallet. Full notes keep their first verification,
/// so a second `verify` can replay it.
#[derive(Debug, PartialEq, Eq)]
pub enum StoredNote {
    Full {
        note: FullBanknote,
        last_verify: Option<VerifyTranscript>,
    },
    Public(PublicNote),
}

impl StoredNote {
    pub fn scheme(&self) -> NoteScheme {
        match self {
            StoredNote::Full { .. } => NoteScheme::Full,
            StoredNote::Public(_) => NoteScheme::Public,
        }
    }

    /// Short identifier: a prefix of the tag or serial.
    pub fn id(&self) -> String {
        let full = match self {
            StoredNote::Full { note, .. } => hex::encode(note.note.obligation_tag.0),
            StoredNote::Public(n) => n.serial.to_hex(),
        };
        full[..ID_LEN].to_string()
    }

    pub fn is_consumed(&self) -> bool {
        match self {
            StoredNote::Full { note, .. } => note.note.is_spent(),
            StoredNote::Public(n) => n.bolt.is_consumed(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoteSummary {
    pub id: String,
    pub scheme: NoteScheme,
    pub consumed: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateJson {
    x0: String,
    x1: String,
    consumed: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WrappedJson {
    ciphertext: String,
    tag: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerJson {
    i: u8,
    kind: String,
    payload: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TranscriptJson {
    n: usize,
    challenge: String,
    answers: Vec<AnswerJson>,
    result: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FullJson {
    simulated: bool,
    scheme: String,
    w: usize,
    obligations: Vec<String>,
    tag: String,
    wrapped: WrappedJson,
    states: Vec<StateJson>,
    last_verify: Option<TranscriptJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoltJson {
    secret: String,
    consumed: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PublicJson {
    simulated: bool,
    scheme: String,
    serial: String,
    signature: String,
    bolt: BoltJson,
}

fn to_json(note: &StoredNote) -> String {
    let mut s = match note {
        StoredNote::Full { note, last_verify } => {
            let mini = &note.note;
            let w = mini.w();
            let file = FullJson {
                simulated: true,
                scheme: "full".into(),
                w,
                obligations: mini.obligations.iter().map(|o| o.0 .0.to_hex()).collect(),
                tag: hex::encode(mini.obligation_tag.0),
                wrapped: WrappedJson {
                    ciphertext: hex::encode(note.wrapped.ciphertext.to_bytes()),
                    tag: hex::encode(note.wrapped.tag.0),
                },
                states: mini
                    .states
                    .iter()
                    .map(|s| {
                        let (x0, x1) = s.simulator_branches();
                        StateJson {
                            x0: x0.to_hex(),
                            x1: x1.to_hex(),
                            consumed: s.is_consumed(),
                        }
                    })
                    .collect(),
                last_verify: last_verify.as_ref().map(|t| TranscriptJson {
                    n: t.challenge.len(),
                    challenge: hex::encode(pack_bits(&t.challenge)),
                    answers: t
                        .answers
                        .iter()
                        .map(|a| AnswerJson {
                            i: a.i as u8,
                            kind: match a.kind {
                                AnswerKind::Preimage => "PREIMAGE".into(),
                                AnswerKind::Equation => "EQUATION".into(),
                            },
                            payload: a.payload.to_hex(),
                        })
                        .collect(),
                    result: t.result,
                }),
            };
            serde_json::to_string_pretty(&file)
        }
        StoredNote::Public(n) => serde_json::to_string_pretty(&PublicJson {
            simulated: true,
            scheme: "public".into(),
            serial: n.serial.to_hex(),
            signature: hex::encode(&n.signature),
            bolt: BoltJson {
                secret: hex::encode(n.bolt.simulator_secret()),
                consumed: n.bolt.is_consumed(),
            },
        }),
    }
    .expect("note serializes");
    s.push('\n');
    s
}

struct Parser<'a> {
    id: &'a str,
}

impl Parser<'_> {
    fn err(&self, detail: impl std::fmt::Display) -> StoreError {
        StoreError::Corrupt {
            id: self.id.to_string(),
            detail: detail.to_string(),
        }
    }

    fn hex(&self, s: &str) -> Result<Vec<u8>, StoreError> {
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(self.err("hex must be lowercase"));
        }
        hex::decode(s).map_err(|e| self.err(e))
    }

    fn fixed32(&self, s: &str) -> Result<[u8; 32], StoreError> {
        self.hex(s)?.try_into().map_err(|_| self.err("expected 32 bytes"))
    }

    fn bitvec(&self, s: &str, w: usize) -> Result<BitVec, StoreError> {
        self.hex(s)?;
        BitVec::from_hex(s, w).map_err(|e| self.err(e))
    }

    fn full(&self, f: FullJson) -> Result<StoredNote, StoreError> {
        let w = f.w;
        if f.obligations.len() != f.states.len() || f.obligations.is_empty() {
            return Err(self.err("obligation and state counts differ"));
        }
        let obligations = f
            .obligations
            .iter()
            .map(|o| Ok(Obligation(Image(self.bitvec(o, w)?))))
            .collect::<Result<Vec<_>, StoreError>>()?;
        let states = f
            .states
            .iter()
            .map(|s| {
                ClawState::simulator_restore(self.bitvec(&s.x0, w)?, self.bitvec(&s.x1, w)?, s.consumed)
                    .map_err(|e| self.err(e))
            })
            .collect::<Result<Vec<_>, StoreError>>()?;
        let tag = Tag(self.fixed32(&f.tag)?);
        let wrapped = WrappedKey {
            ciphertext: Ciphertext::from_bytes(&self.hex(&f.wrapped.ciphertext)?).map_err(|e| self.err(e))?,
            tag: Tag(self.fixed32(&f.wrapped.tag)?),
        };
        let last_verify = match f.last_verify {
            None => None,
            Some(t) => {
                if t.n != obligations.len() || t.answers.len() != t.n {
                    return Err(self.err("transcript length differs from note"));
                }
                let challenge = unpack_bits(&self.hex(&t.challenge)?, t.n).map_err(|e| self.err(e))?;
                let answers = t
                    .answers
                    .iter()
                    .map(|a| {
                        let kind = match a.kind.as_str() {
                            "PREIMAGE" => AnswerKind::Preimage,
                            "EQUATION" => AnswerKind::Equation,
                            other => return Err(self.err(format!("answer kind {other}"))),
                        };
                        let i = match a.i {
                            0 => false,
                            1 => true,
                            _ => return Err(self.err("answer bit must be 0 or 1")),
                        };
                        Ok(Answer {
                            i,
                            kind,
                            payload: self.bitvec(&a.payload, w)?,
                        })
                    })
                    .collect::<Result<Vec<_>, StoreError>>()?;
                Some(VerifyTranscript {
                    challenge,
                    answers,
                    obligations: obligations.clone(),
                    tag,
                    result: t.result,
                })
            }
        };
        Ok(StoredNote::Full {
            note: FullBanknote {
                wrapped,
                note: MiniBanknote {
                    obligations,
                    obligation_tag: tag,
                    states,
                },
            },
            last_verify,
        })
    }

    fn public(&self, f: PublicJson, suite: &LightningSuite) -> Result<StoredNote, StoreError> {
        let serial = Serial(self.fixed32(&f.serial)?);
        let bolt = Bolt::simulator_restore(suite, self.fixed32(&f.bolt.secret)?, f.bolt.consumed);
        if bolt.serial() != serial {
            return Err(self.err("bolt does not match serial under this bank's suite"));
        }
        Ok(StoredNote::Public(PublicNote {
            bolt,
            serial,
            signature: self.hex(&f.signature)?,
        }))
    }
}

fn scheme_of(id: &str, text: &str) -> Result<(NoteScheme, Value), StoreError> {
    let corrupt = |detail: String| StoreError::Corrupt {
        id: id.to_string(),
        detail,
    };
    let value: Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if value.get("simulated") != Some(&Value::Bool(true)) {
        return Err(corrupt("missing \"simulated\": true marker".into()));
    }
    let scheme = match value.get("scheme").and_then(Value::as_str) {
        Some("full") => NoteScheme::Full,
        Some("public") => NoteScheme::Public,
        other => return Err(corrupt(format!("unknown scheme {other:?}"))),
    };
    Ok((scheme, value))
}

fn valid_id(id: &str) -> bool {
    id.len() == ID_LEN && id.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// An open wallet directory. Holds an advisory lock file for its lifetime.
#[derive(Debug)]
pub struct WalletStore {
    dir: PathBuf,
    lock: PathBuf,
}

impl WalletStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let lock = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(StoreError::Locked(dir.display().to_string()))
            }
            Err(e) => return Err(e.into()),
        }
        Ok(Self { dir, lock })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Atomically replaces (or creates) the note's file.
    fn write(&self, id: &str, text: &str) -> Result<(), StoreError> {
        let tmp = self.dir.join(format!(".{id}.tmp"));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.path(id))?;
        Ok(())
    }

    /// Stores a new note and returns its id.
    pub fn insert(&self, note: &StoredNote) -> Result<String, StoreError> {
        let id = note.id();
        if self.path(&id).exists() {
            return Err(StoreError::Exists(id));
        }
        self.write(&id, &to_json(note))?;
        Ok(id)
    }

    /// Overwrites an existing note, e.g. after measuring its states.
    pub fn update(&self, id: &str, note: &StoredNote) -> Result<(), StoreError> {
        if !valid_id(id) || !self.path(id).exists() {
            return Err(StoreError::NotFound(id.to_string()));
        }
        if note.id() != id {
            return Err(StoreError::Corrupt {
                id: id.to_string(),
                detail: "note id changed".into(),
            });
        }
        self.write(id, &to_json(note))
    }

    fn read(&self, id: &str) -> Result<String, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::NotFound(id.to_string()));
        }
        match fs::read_to_string(self.path(id)) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(StoreError::NotFound(id.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    /// Loads a note. Public notes are rebuilt under `suite`.
    pub fn load(&self, id: &str, suite: Option<&LightningSuite>) -> Result<StoredNote, StoreError> {
        let text = self.read(id)?;
        let (scheme, value) = scheme_of(id, &text)?;
        let p = Parser { id };
        let note = match scheme {
            NoteScheme::Full => p.full(serde_json::from_value(value).map_err(|e| p.err(e))?)?,
            NoteScheme::Public => {
                let suite = suite.ok_or_else(|| p.err("public note needs the bank's public key"))?;
                p.public(serde_json::from_value(value).map_err(|e| p.err(e))?, suite)?
            }
        };
        if note.id() != id {
            return Err(p.err("file name does not match contents"));
        }
        Ok(note)
    }

    pub fn scheme(&self, id: &str) -> Result<NoteScheme, StoreError> {
        Ok(scheme_of(id, &self.read(id)?)?.0)
    }

    pub fn remove(&self, id: &str) -> Result<(), StoreError> {
        self.read(id)?;
        fs::remove_file(self.path(id))?;
        Ok(())
    }

    /// Every note in id order, with its consumed status read from the file.
    pub fn list(&self) -> Result<Vec<NoteSummary>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            let Some(id) = name.strip_suffix(".json") else {
                continue;
            };
            if !valid_id(id) {
                continue;
            }
            let (scheme, value) = scheme_of(id, &self.read(id)?)?;
            let consumed = match scheme {
                NoteScheme::Full => value["states"]
                    .as_array()
                    .map(|s| s.iter().any(|st| st["consumed"] == Value::Bool(true)))
                    .unwrap_or(false),
                NoteScheme::Public => value["bolt"]["consumed"] == Value::Bool(true),
            };
            out.push(NoteSummary {
                id: id.to_string(),
                scheme,
                consumed,
            });
        }
        out.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(out)
    }
}

impl Drop for WalletStore {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use semiqm_core::money_private::{full_keygen, Params, PrivateBank};
    use semiqm_core::money_private::{full_cverify_user, full_mint_user, LocalBankLink};
    use semiqm_core::money_public::{p_keygen, p_mint_user, LocalPublicLink, PublicBank, SpentSerialDB};
    use semiqm_core::protocol::BankLink;
    use std::sync::Arc;

    fn full_note(seed: u64) -> (Arc<PrivateBank>, FullBanknote) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let params = Params::new(16).unwrap().with_n(6).unwrap().with_w(13).unwrap();
        let bank = Arc::new(PrivateBank::full(full_keygen(&mut rng), params));
        let mut link = LocalBankLink::new(bank.clone(), ChaCha20Rng::seed_from_u64(seed + 1));
        let note = full_mint_user(link.open().unwrap().as_mut(), &mut rng).unwrap();
        (bank, note)
    }

    #[test]
    fn full_notes_roundtrip_with_consumed_flags() {
        let dir = tempfile::tempdir().unwrap();
        let store = WalletStore::open(dir.path()).unwrap();
        let (_, mut note) = full_note(1);
        note.note.states[2].measure_standard(&mut ChaCha20Rng::seed_from_u64(0)).unwrap();
        let stored = StoredNote::Full {
            note,
            last_verify: None,
        };
        let id = store.insert(&stored).unwrap();
        let back = store.load(&id, None).unwrap();
        assert_eq!(back, stored);
        assert!(back.is_consumed());
        assert!(store.list().unwrap()[0].consumed);

        let (bank, mut fresh) = full_note(2);
        let mut link = LocalBankLink::new(bank, ChaCha20Rng::seed_from_u64(9));
        let out = full_cverify_user(link.open().unwrap().as_mut(), &mut fresh, &mut ChaCha20Rng::seed_from_u64(3))
            .unwrap();
        assert!(out.accepted && out.transcript.is_some());
        let stored = StoredNote::Full {
            note: fresh,
            last_verify: out.transcript,
        };
        let id = store.insert(&stored).unwrap();
        assert_eq!(store.load(&id, None).unwrap(), stored);
    }

    #[test]
    fn public_notes_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (pk, sk) = p_keygen(&mut rng);
        let db = SpentSerialDB::open(dir.path().join("spent.db")).unwrap();
        let mut link = LocalPublicLink::new(Arc::new(PublicBank::new(pk, sk, db)));
        let note = p_mint_user(link.open().unwrap().as_mut(), &pk, &mut rng).unwrap();
        let store = WalletStore::open(dir.path().join("wallet")).unwrap();
        let stored = StoredNote::Public(note);
        let id = store.insert(&stored).unwrap();
        assert_eq!(store.load(&id, Some(&pk.suite)).unwrap(), stored);
        let (other, _) = p_keygen(&mut rng);
        assert!(matches!(store.load(&id, Some(&other.suite)), Err(StoreError::Corrupt { .. })));
        assert!(store.load(&id, None).is_err());
    }

    #[test]
    fn the_simulated_marker_is_mandatory() {
        let dir = tempfile::tempdir().unwrap();
        let store = WalletStore::open(dir.path()).unwrap();
        let (_, note) = full_note(3);
        let id = store
            .insert(&StoredNote::Full {
                note,
                last_verify: None,
            })
            .unwrap();
        let path = dir.path().join(format!("{id}.json"));
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"simulated\": true"));
        fs::write(&path, text.replace("\"simulated\": true", "\"simulated\": false")).unwrap();
        assert!(matches!(store.load(&id, None), Err(StoreError::Corrupt { .. })));
        assert!(store.list().is_err());
    }

    #[test]
    fn missing_notes_and_bad_ids_are_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let store = WalletStore::open(dir.path()).unwrap();
        assert!(matches!(store.load("0123456789abcdef", None), Err(StoreError::NotFound(_))));
        assert!(matches!(store.load("../etc/passwd", None), Err(StoreError::NotFound(_))));
    }

    #[test]
    fn the_lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = WalletStore::open(dir.path()).unwrap();
        assert!(matches!(WalletStore::open(dir.path()), Err(StoreError::Locked(_))));
        drop(a);
        WalletStore::open(dir.path()).unwrap();
    }

    #[test]
    fn corrupt_states_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = WalletStore::open(dir.path()).unwrap();
        let (_, note) = full_note(4);
        let (x0, _) = note.note.states[0].simulator_branches();
        let stored = StoredNote::Full {
            note,
            last_verify: None,
        };
        let id = store.insert(&stored).unwrap();
        let path = dir.path().join(format!("{id}.json"));
        let mut v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        // identical branches are not a claw state
        v["states"][0]["x1"] = Value::String(x0.to_hex());
        fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
        assert!(matches!(store.load(&id, None), Err(StoreError::Corrupt { .. })));
    }
}
