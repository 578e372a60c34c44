//! MAC, randomized symmetric encryption and signatures.
//!
//! - MAC: HMAC-SHA256 with 32-byte keys and tags.
//! - Encryption: SHA-256 counter-mode keystream over `key || nonce || counter`
//!   with a fresh 16-byte nonce. No integrity; callers MAC the ciphertext.
//! - Signatures: Ed25519.
//!
//! Structured data is MACed through [`encode_fields`], a length-prefixed
//! concatenation.

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use hmac::{Hmac, Mac};
use rand::{CryptoRng, Rng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

type HmacSha256 = Hmac<Sha256>;

pub const KEY_LEN: usize = 32;
pub const TAG_LEN: usize = 32;
pub const NONCE_LEN: usize = 16;
pub const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("malformed ciphertext: {0}")]
    MalformedCiphertext(String),
    #[error("malformed key: expected {expected} bytes, got {got}")]
    MalformedKey { expected: usize, got: usize },
    #[error("malformed field encoding: {0}")]
    MalformedFields(String),
}

fn fixed<const N: usize>(bytes: &[u8]) -> Result<[u8; N], CryptoError> {
    bytes.try_into().map_err(|_| CryptoError::MalformedKey {
        expected: N,
        got: bytes.len(),
    })
}

#[derive(Clone, PartialEq, Eq)]
pub struct MacKey([u8; KEY_LEN]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag(pub [u8; TAG_LEN]);

#[derive(Clone, PartialEq, Eq)]
pub struct EncKey([u8; KEY_LEN]);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    pub nonce: [u8; NONCE_LEN],
    pub body: Vec<u8>,
}

macro_rules! secret_key_impl {
    ($name:ident) => {
        impl $name {
            pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
                &self.0
            }

            pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
                Ok(Self(fixed(bytes)?))
            }
        }

        impl std::fmt::Debug for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(concat!(stringify!($name), "(..)"))
            }
        }
    };
}

secret_key_impl!(MacKey);
secret_key_impl!(EncKey);

impl Tag {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        Ok(Self(fixed(bytes)?))
    }
}

pub fn mac_keygen<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> MacKey {
    let mut k = [0u8; KEY_LEN];
    rng.fill_bytes(&mut k);
    MacKey(k)
}

pub fn mac_tag(k: &MacKey, m: &[u8]) -> Tag {
    let mut mac = HmacSha256::new_from_slice(&k.0).expect("hmac accepts any key length");
    mac.update(m);
    Tag(mac.finalize().into_bytes().into())
}

/// Constant-time tag comparison.
pub fn mac_verify(k: &MacKey, m: &[u8], t: &Tag) -> bool {
    let mut mac = HmacSha256::new_from_slice(&k.0).expect("hmac accepts any key length");
    mac.update(m);
    mac.verify_slice(&t.0).is_ok()
}

pub fn enc_keygen<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> EncKey {
    let mut k = [0u8; KEY_LEN];
    rng.fill_bytes(&mut k);
    EncKey(k)
}

fn apply_keystream(k: &EncKey, nonce: &[u8; NONCE_LEN], data: &mut [u8]) {
    for (counter, chunk) in data.chunks_mut(32).enumerate() {
        let mut h = Sha256::new();
        h.update(k.0);
        h.update(nonce);
        h.update((counter as u64).to_be_bytes());
        let block = h.finalize();
        for (byte, ks) in chunk.iter_mut().zip(block.iter()) {
            *byte ^= ks;
        }
    }
}

pub fn encrypt<R: Rng + CryptoRng + ?Sized>(k: &EncKey, m: &[u8], rng: &mut R) -> Ciphertext {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let mut body = m.to_vec();
    apply_keystream(k, &nonce, &mut body);
    Ciphertext { nonce, body }
}

pub fn decrypt(k: &EncKey, c: &Ciphertext) -> Vec<u8> {
    let mut body = c.body.clone();
    apply_keystream(k, &c.nonce, &mut body);
    body
}

impl Ciphertext {
    /// `nonce || body`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NONCE_LEN + self.body.len());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < NONCE_LEN {
            return Err(CryptoError::MalformedCiphertext(format!(
                "{} bytes is shorter than the nonce",
                bytes.len()
            )));
        }
        Ok(Self {
            nonce: fixed(&bytes[..NONCE_LEN]).expect("length checked"),
            body: bytes[NONCE_LEN..].to_vec(),
        })
    }
}

/// Signing half of an Ed25519 key pair.
#[derive(Clone)]
pub struct SigKeyPair {
    signing: SigningKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SigPublicKey(VerifyingKey);

impl std::fmt::Debug for SigKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SigKeyPair")
            .field("pk", &self.public())
            .finish_non_exhaustive()
    }
}

impl PartialEq for SigKeyPair {
    fn eq(&self, other: &Self) -> bool {
        self.signing.to_bytes() == other.signing.to_bytes()
    }
}

impl Eq for SigKeyPair {}

pub fn sig_keygen<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> SigKeyPair {
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    SigKeyPair {
        signing: SigningKey::from_bytes(&seed),
    }
}

impl SigKeyPair {
    pub fn public(&self) -> SigPublicKey {
        SigPublicKey(self.signing.verifying_key())
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn from_secret_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        Ok(Self {
            signing: SigningKey::from_bytes(&fixed(bytes)?),
        })
    }
}

impl SigPublicKey {
    pub fn to_bytes(&self) -> [u8; 32] {
        self.0.to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        VerifyingKey::from_bytes(&fixed(bytes)?)
            .map(Self)
            .map_err(|e| CryptoError::MalformedFields(e.to_string()))
    }
}

pub fn sign(sk: &SigKeyPair, m: &[u8]) -> [u8; SIGNATURE_LEN] {
    sk.signing.sign(m).to_bytes()
}

/// Total: malformed signatures are rejected, never an error.
pub fn sig_verify(pk: &SigPublicKey, m: &[u8], sigma: &[u8]) -> bool {
    let Ok(bytes) = <[u8; SIGNATURE_LEN]>::try_from(sigma) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&bytes);
    pk.0.verify(m, &sig).is_ok()
}

/// Each field as a 4-byte big-endian length followed by its bytes.
pub fn encode_fields<T: AsRef<[u8]>>(fields: &[T]) -> Vec<u8> {
    let total: usize = fields.iter().map(|f| 4 + f.as_ref().len()).sum();
    let mut out = Vec::with_capacity(total);
    for f in fields {
        let f = f.as_ref();
        out.extend_from_slice(&(f.len() as u32).to_be_bytes());
        out.extend_from_slice(f);
    }
    out
}

pub fn decode_fields(mut bytes: &[u8]) -> Result<Vec<&[u8]>, CryptoError> {
    let mut fields = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < 4 {
            return Err(CryptoError::MalformedFields("truncated length prefix".into()));
        }
        let len = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
        bytes = &bytes[4..];
        if bytes.len() < len {
            return Err(CryptoError::MalformedFields("truncated field".into()));
        }
        fields.push(&bytes[..len]);
        bytes = &bytes[len..];
    }
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn mac_completeness_and_bit_flip() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let k = mac_keygen(&mut rng);
        let t = mac_tag(&k, b"obligations");
        assert!(mac_verify(&k, b"obligations", &t));
        for byte in 0..TAG_LEN {
            let mut bad = t;
            bad.0[byte] ^= 0x10;
            assert!(!mac_verify(&k, b"obligations", &bad));
        }
        assert!(!mac_verify(&mac_keygen(&mut rng), b"obligations", &t));
    }

    #[test]
    fn random_tags_never_verify() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let k = mac_keygen(&mut rng);
        let accepted = (0..100_000)
            .filter(|_| {
                let mut t = [0u8; TAG_LEN];
                rng.fill_bytes(&mut t);
                mac_verify(&k, b"fixed", &Tag(t))
            })
            .count();
        assert_eq!(accepted, 0);
    }

    #[test]
    fn encryption_roundtrip_lengths() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let k = enc_keygen(&mut rng);
        for len in [0usize, 1, 1000] {
            let m: Vec<u8> = (0..len).map(|i| (i * 7) as u8).collect();
            let c = encrypt(&k, &m, &mut rng);
            assert_eq!(c.body.len(), len);
            assert_eq!(decrypt(&k, &c), m);
            let parsed = Ciphertext::from_bytes(&c.to_bytes()).unwrap();
            assert_eq!(decrypt(&k, &parsed), m);
        }
    }

    #[test]
    fn encryption_is_randomized_and_nonces_do_not_repeat() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let k = enc_keygen(&mut rng);
        let mut nonces = std::collections::HashSet::new();
        for _ in 0..10_000 {
            let c = encrypt(&k, b"same message", &mut rng);
            assert!(nonces.insert(c.nonce));
        }
        let a = encrypt(&k, b"same", &mut rng);
        let b = encrypt(&k, b"same", &mut rng);
        assert_ne!(a, b);
    }

    #[test]
    fn truncated_ciphertext_is_malformed() {
        assert!(matches!(
            Ciphertext::from_bytes(&[0u8; NONCE_LEN - 1]),
            Err(CryptoError::MalformedCiphertext(_))
        ));
        assert!(Ciphertext::from_bytes(&[0u8; NONCE_LEN]).is_ok());
    }

    #[test]
    fn signature_completeness_and_rejections() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let sk = sig_keygen(&mut rng);
        let sigma = sign(&sk, b"serial");
        assert!(sig_verify(&sk.public(), b"serial", &sigma));
        assert!(!sig_verify(&sig_keygen(&mut rng).public(), b"serial", &sigma));
        assert!(!sig_verify(&sk.public(), b"serial", &sigma[..63]));
        let restored = SigKeyPair::from_secret_bytes(&sk.secret_bytes()).unwrap();
        assert_eq!(restored.public(), sk.public());
    }

    #[test]
    fn random_signatures_never_verify() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let pk = sig_keygen(&mut rng).public();
        let accepted = (0..100_000)
            .filter(|_| {
                let mut s = [0u8; SIGNATURE_LEN];
                rng.fill_bytes(&mut s);
                sig_verify(&pk, b"serial", &s)
            })
            .count();
        assert_eq!(accepted, 0);
    }

    #[test]
    fn field_encoding_is_length_prefixed() {
        let enc = encode_fields(&[b"ab".as_slice(), b"", b"c"]);
        assert_eq!(enc, [0, 0, 0, 2, b'a', b'b', 0, 0, 0, 0, 0, 0, 0, 1, b'c']);
        assert_eq!(decode_fields(&enc).unwrap(), vec![&b"ab"[..], b"", b"c"]);
        assert!(decode_fields(&enc[..enc.len() - 1]).is_err());
        // no splicing: moving a byte across a boundary changes the encoding
        assert_ne!(encode_fields(&[b"ab".as_slice(), b"c"]), encode_fields(&[b"a".as_slice(), b"bc"]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn completeness_for_arbitrary_messages(m in proptest::collection::vec(any::<u8>(), 0..256), seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mk = mac_keygen(&mut rng);
            prop_assert!(mac_verify(&mk, &m, &mac_tag(&mk, &m)));
            let ek = enc_keygen(&mut rng);
            prop_assert_eq!(decrypt(&ek, &encrypt(&ek, &m, &mut rng)), m.clone());
            let sk = sig_keygen(&mut rng);
            prop_assert!(sig_verify(&sk.public(), &m, &sign(&sk, &m)));
        }
    }
}
