//! Pluggable signing backends.
//!
//! Two providers implement [`CryptoProvider`]: [`RsaProvider`] signs with
//! RSA/SHA-256 through OpenSSL and is the default for anything that claims
//! realistic latency numbers, and [`TestProvider`] is a fast deterministic
//! keyed-digest construction for suites that need hundreds of keypairs
//! without paying for RSA key generation.

use std::sync::Mutex;

use openssl::hash::MessageDigest;
use openssl::pkey::PKey;
use openssl::rsa::Rsa;
use openssl::sha::Sha256;
use openssl::sign::{Signer, Verifier};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{KeyPair, KeyStrength, PkiError, PrivateKey, PublicKey, Signature, SignatureScheme};

/// Key generation, signing and verification behind a common interface.
///
/// Verification never panics on malformed input: garbage key or signature
/// bytes simply fail to verify.
pub trait CryptoProvider: Send + Sync {
    /// Short stable name, used in CLI flags and reports.
    fn name(&self) -> &'static str;

    /// Generate a fresh keypair of the given strength.
    fn generate_keypair(&self, strength: KeyStrength) -> Result<KeyPair, PkiError>;

    /// Sign `data` with a private key produced by this provider.
    fn sign(&self, key: &PrivateKey, data: &[u8]) -> Result<Signature, PkiError>;

    /// Check `sig` over `data` against a public key.
    fn verify(&self, key: &PublicKey, data: &[u8], sig: &Signature) -> bool;
}

/// RSA with SHA-256 digests (PKCS#1 v1.5), backed by OpenSSL.
///
/// Keys are held as DER: PKCS#1 for the private half, SubjectPublicKeyInfo
/// for the public half.
#[derive(Debug, Default)]
pub struct RsaProvider;

impl RsaProvider {
    pub fn new() -> Self {
        RsaProvider
    }
}

impl CryptoProvider for RsaProvider {
    fn name(&self) -> &'static str {
        "rsa"
    }

    fn generate_keypair(&self, strength: KeyStrength) -> Result<KeyPair, PkiError> {
        let rsa = Rsa::generate(strength.bits())
            .map_err(|e| PkiError::Backend(format!("RSA key generation failed: {e}")))?;
        let private = rsa
            .private_key_to_der()
            .map_err(|e| PkiError::Backend(format!("private key encoding failed: {e}")))?;
        let public = rsa
            .public_key_to_der()
            .map_err(|e| PkiError::Backend(format!("public key encoding failed: {e}")))?;
        Ok(KeyPair {
            strength,
            public: PublicKey {
                scheme: SignatureScheme::RsaSha256,
                bytes: public,
            },
            private: PrivateKey {
                scheme: SignatureScheme::RsaSha256,
                bytes: private,
            },
        })
    }

    fn sign(&self, key: &PrivateKey, data: &[u8]) -> Result<Signature, PkiError> {
        if key.scheme != SignatureScheme::RsaSha256 {
            return Err(PkiError::SchemeMismatch {
                expected: SignatureScheme::RsaSha256,
                found: key.scheme,
            });
        }
        let rsa = Rsa::private_key_from_der(&key.bytes)
            .map_err(|e| PkiError::Backend(format!("private key decoding failed: {e}")))?;
        let pkey = PKey::from_rsa(rsa)
            .map_err(|e| PkiError::Backend(format!("private key wrapping failed: {e}")))?;
        let mut signer = Signer::new(MessageDigest::sha256(), &pkey)
            .map_err(|e| PkiError::Backend(format!("signer setup failed: {e}")))?;
        signer
            .update(data)
            .map_err(|e| PkiError::Backend(format!("signing failed: {e}")))?;
        let bytes = signer
            .sign_to_vec()
            .map_err(|e| PkiError::Backend(format!("signing failed: {e}")))?;
        Ok(Signature(bytes))
    }

    fn verify(&self, key: &PublicKey, data: &[u8], sig: &Signature) -> bool {
        if key.scheme != SignatureScheme::RsaSha256 {
            return false;
        }
        let Ok(pkey) = PKey::public_key_from_der(&key.bytes) else {
            return false;
        };
        let Ok(mut verifier) = Verifier::new(MessageDigest::sha256(), &pkey) else {
            return false;
        };
        if verifier.update(data).is_err() {
            return false;
        }
        verifier.verify(&sig.0).unwrap_or(false)
    }
}

/// Deterministic keyed-digest provider for tests.
///
/// A "keypair" is a single 32-byte secret shared by both halves; a signature
/// is `SHA-256(tag ‖ secret ‖ data ‖ secret)`. This gives every property the
/// suites rely on (round-trip, wrong-key and wrong-data rejection, byte-flip
/// sensitivity) at hashing speed. It offers no actual security and must never
/// leave test or bench code paths that explicitly opt into it.
pub struct TestProvider {
    rng: Mutex<ChaCha20Rng>,
}

impl TestProvider {
    /// Provider with a fixed key-generation seed; same seed, same key stream.
    pub fn seeded(seed: u64) -> Self {
        TestProvider {
            rng: Mutex::new(ChaCha20Rng::seed_from_u64(seed)),
        }
    }

    fn digest(key: &[u8], data: &[u8]) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(b"trufl-test-sig");
        h.update(&(key.len() as u32).to_be_bytes());
        h.update(key);
        h.update(data);
        h.update(key);
        h.finish().to_vec()
    }
}

impl Default for TestProvider {
    fn default() -> Self {
        Self::seeded(rand::rng().next_u64())
    }
}

impl CryptoProvider for TestProvider {
    fn name(&self) -> &'static str {
        "test"
    }

    fn generate_keypair(&self, strength: KeyStrength) -> Result<KeyPair, PkiError> {
        let mut secret = vec![0u8; 32];
        self.rng.lock().unwrap().fill_bytes(&mut secret);
        Ok(KeyPair {
            strength,
            public: PublicKey {
                scheme: SignatureScheme::KeyedDigest,
                bytes: secret.clone(),
            },
            private: PrivateKey {
                scheme: SignatureScheme::KeyedDigest,
                bytes: secret,
            },
        })
    }

    fn sign(&self, key: &PrivateKey, data: &[u8]) -> Result<Signature, PkiError> {
        if key.scheme != SignatureScheme::KeyedDigest {
            return Err(PkiError::SchemeMismatch {
                expected: SignatureScheme::KeyedDigest,
                found: key.scheme,
            });
        }
        Ok(Signature(Self::digest(&key.bytes, data)))
    }

    fn verify(&self, key: &PublicKey, data: &[u8], sig: &Signature) -> bool {
        key.scheme == SignatureScheme::KeyedDigest && Self::digest(&key.bytes, data) == sig.0
    }
}
