//! Bank key file and the public-key file handed to wallets.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use rand::{CryptoRng, Rng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use semiqm_core::money_private::{full_keygen, FullKey, Params};
use semiqm_core::money_public::{ql_setup, LightningSuite, PublicKeyBundle};
use semiqm_core::primitives::{sig_keygen, EncKey, MacKey, SigKeyPair, SigPublicKey};

pub const KEY_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum KeyFileError {
    #[error("key file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("key file syntax: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid key file: {0}")]
    Invalid(String),
}

fn invalid(e: impl std::fmt::Display) -> KeyFileError {
    KeyFileError::Invalid(e.to_string())
}

fn unhex<const N: usize>(field: &str, s: &str) -> Result<[u8; N], KeyFileError> {
    if s.bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(invalid(format!("{field}: hex must be lowercase")));
    }
    let bytes = hex::decode(s).map_err(|e| invalid(format!("{field}: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| invalid(format!("{field}: expected {N} bytes")))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FullKeyJson {
    mac: String,
    enc: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignatureJson {
    sk: String,
    pk: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LightningJson {
    salt: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyFileJson {
    version: u32,
    lambda: u32,
    n: usize,
    w: usize,
    full_key: FullKeyJson,
    signature: SignatureJson,
    lightning: LightningJson,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PublicFileJson {
    version: u32,
    signature_pk: String,
    lightning: LightningJson,
}

/// Everything the bank keeps: scheme parameters, the full-scheme key and
/// the public-scheme signing key and lightning suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankKeys {
    pub params: Params,
    pub full_key: FullKey,
    pub sig: SigKeyPair,
    pub suite: LightningSuite,
}

impl BankKeys {
    pub fn generate<R: Rng + CryptoRng + ?Sized>(params: Params, rng: &mut R) -> Self {
        Self {
            params,
            full_key: full_keygen(rng),
            sig: sig_keygen(rng),
            suite: ql_setup(rng),
        }
    }

    pub fn public_bundle(&self) -> PublicKeyBundle {
        PublicKeyBundle {
            suite: self.suite,
            sig_pk: self.sig.public(),
        }
    }

    pub fn to_json(&self) -> String {
        let file = KeyFileJson {
            version: KEY_FILE_VERSION,
            lambda: self.params.lambda,
            n: self.params.n,
            w: self.params.w,
            full_key: FullKeyJson {
                mac: hex::encode(self.full_key.mac_key.as_bytes()),
                enc: hex::encode(self.full_key.enc_key.as_bytes()),
            },
            signature: SignatureJson {
                sk: hex::encode(self.sig.secret_bytes()),
                pk: hex::encode(self.sig.public().to_bytes()),
            },
            lightning: LightningJson {
                salt: hex::encode(self.suite.salt()),
            },
        };
        let mut s = serde_json::to_string_pretty(&file).expect("key file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, KeyFileError> {
        let file: KeyFileJson = serde_json::from_str(s)?;
        if file.version != KEY_FILE_VERSION {
            return Err(invalid(format!("unsupported version {}", file.version)));
        }
        let params = Params::new(file.lambda)
            .and_then(|p| p.with_n(file.n))
            .and_then(|p| p.with_w(file.w))
            .map_err(invalid)?;
        let full_key = FullKey {
            mac_key: MacKey::from_bytes(&unhex::<32>("full_key.mac", &file.full_key.mac)?).map_err(invalid)?,
            enc_key: EncKey::from_bytes(&unhex::<32>("full_key.enc", &file.full_key.enc)?).map_err(invalid)?,
        };
        let sig = SigKeyPair::from_secret_bytes(&unhex::<32>("signature.sk", &file.signature.sk)?)
            .map_err(invalid)?;
        let pk = unhex::<32>("signature.pk", &file.signature.pk)?;
        if sig.public().to_bytes() != pk {
            return Err(invalid("signature.pk does not match signature.sk"));
        }
        let suite = LightningSuite::from_salt(unhex("lightning.salt", &file.lightning.salt)?);
        Ok(Self {
            params,
            full_key,
            sig,
            suite,
        })
    }

    /// Writes the key file; refuses to overwrite an existing one.
    pub fn save(&self, path: &Path) -> Result<(), KeyFileError> {
        let mut opts = OpenOptions::new();
        opts.write(true).create_new(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(path)?;
        f.write_all(self.to_json().as_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, KeyFileError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub fn public_to_json(pk: &PublicKeyBundle) -> String {
    let file = PublicFileJson {
        version: KEY_FILE_VERSION,
        signature_pk: hex::encode(pk.sig_pk.to_bytes()),
        lightning: LightningJson {
            salt: hex::encode(pk.suite.salt()),
        },
    };
    let mut s = serde_json::to_string_pretty(&file).expect("public file serializes");
    s.push('\n');
    s
}

pub fn public_from_json(s: &str) -> Result<PublicKeyBundle, KeyFileError> {
    let file: PublicFileJson = serde_json::from_str(s)?;
    if file.version != KEY_FILE_VERSION {
        return Err(invalid(format!("unsupported version {}", file.version)));
    }
    Ok(PublicKeyBundle {
        suite: LightningSuite::from_salt(unhex("lightning.salt", &file.lightning.salt)?),
        sig_pk: SigPublicKey::from_bytes(&unhex::<32>("signature_pk", &file.signature_pk)?).map_err(invalid)?,
    })
}
