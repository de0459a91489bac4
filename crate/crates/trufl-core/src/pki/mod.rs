//! Keypairs, certificate requests, certificates, chain-of-trust verification
//! and bridge cross-certification.
//!
//! Certificates use a custom canonical encoding (fixed field order,
//! length-prefixed variable fields, big-endian integers) rather than X.509;
//! the signature covers exactly the canonical to-be-signed bytes. Anything
//! that needs a wall clock takes `now` as a parameter — nothing in this
//! module reads ambient time.

mod provider;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use provider::{CryptoProvider, RsaProvider, TestProvider};

/// Default certificate lifetime: five 365-day years, in seconds.
pub const DEFAULT_VALIDITY_SECS: i64 = 60 * 60 * 24 * 365 * 5;

/// Errors from key handling, issuance and serialization.
#[derive(Debug, Error)]
pub enum PkiError {
    /// Key strength outside the supported set.
    #[error("unsupported key strength {0} (supported: 1024, 2048, 4096)")]
    UnsupportedStrength(u32),
    /// Certificate requests need a non-empty common name.
    #[error("common name must not be empty")]
    EmptyCommonName,
    /// Issuer keypair does not match the issuer certificate.
    #[error("issuer key does not match issuer certificate for {issuer}")]
    AuthorityMismatch { issuer: String },
    /// Validity must be a positive number of seconds.
    #[error("certificate validity must be positive, got {0}")]
    NonPositiveValidity(i64),
    /// An anchor argument is not a valid self-signed anchor.
    #[error("{subject} is not a valid self-signed trust anchor")]
    NotAnAnchor { subject: String },
    /// Key used with the wrong provider.
    #[error("key scheme mismatch: expected {expected}, found {found}")]
    SchemeMismatch {
        expected: SignatureScheme,
        found: SignatureScheme,
    },
    /// Malformed certificate bytes.
    #[error("certificate decoding failed: {0}")]
    Decode(String),
    /// Malformed armored block.
    #[error("armor parsing failed: {0}")]
    Armor(String),
    /// Crypto backend failure.
    #[error("crypto backend error: {0}")]
    Backend(String),
}

/// Supported RSA moduli (plus whatever the test provider pretends to honor).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[derive(Default)]
pub enum KeyStrength {
    Bits1024,
    #[default]
    Bits2048,
    Bits4096,
}

impl KeyStrength {
    /// Validate a bit count; anything outside {1024, 2048, 4096} is rejected.
    pub fn new(bits: u32) -> Result<Self, PkiError> {
        match bits {
            1024 => Ok(KeyStrength::Bits1024),
            2048 => Ok(KeyStrength::Bits2048),
            4096 => Ok(KeyStrength::Bits4096),
            other => Err(PkiError::UnsupportedStrength(other)),
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            KeyStrength::Bits1024 => 1024,
            KeyStrength::Bits2048 => 2048,
            KeyStrength::Bits4096 => 4096,
        }
    }
}


/// Identifies which provider family produced a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignatureScheme {
    RsaSha256,
    KeyedDigest,
}

impl SignatureScheme {
    fn tag(self) -> u8 {
        match self {
            SignatureScheme::RsaSha256 => 1,
            SignatureScheme::KeyedDigest => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, PkiError> {
        match tag {
            1 => Ok(SignatureScheme::RsaSha256),
            2 => Ok(SignatureScheme::KeyedDigest),
            other => Err(PkiError::Decode(format!("unknown scheme tag {other}"))),
        }
    }
}

impl fmt::Display for SignatureScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignatureScheme::RsaSha256 => write!(f, "rsa-sha256"),
            SignatureScheme::KeyedDigest => write!(f, "keyed-digest"),
        }
    }
}

/// Public half of a keypair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKey {
    pub scheme: SignatureScheme,
    #[serde(with = "base64_bytes")]
    pub bytes: Vec<u8>,
}

/// Private half of a keypair. Not serializable; `Debug` redacts the bytes.
#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    pub scheme: SignatureScheme,
    pub bytes: Vec<u8>,
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateKey")
            .field("scheme", &self.scheme)
            .field("bytes", &"<redacted>")
            .finish()
    }
}

/// A generated keypair.
#[derive(Debug, Clone)]
pub struct KeyPair {
    pub strength: KeyStrength,
    pub public: PublicKey,
    pub private: PrivateKey,
}

/// A detached signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature(pub Vec<u8>);

/// Generate a keypair after validating the requested strength in bits.
pub fn generate_keypair(provider: &dyn CryptoProvider, bits: u32) -> Result<KeyPair, PkiError> {
    provider.generate_keypair(KeyStrength::new(bits)?)
}

/// Sign arbitrary bytes.
pub fn sign(provider: &dyn CryptoProvider, data: &[u8], key: &KeyPair) -> Result<Signature, PkiError> {
    provider.sign(&key.private, data)
}

/// Verify a detached signature.
pub fn verify_signature(
    provider: &dyn CryptoProvider,
    public: &PublicKey,
    data: &[u8],
    sig: &Signature,
) -> bool {
    provider.verify(public, data, sig)
}

/// A certificate signing request: a common name plus the key to certify.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertRequest {
    pub subject_common_name: String,
    pub subject_public_key: PublicKey,
}

/// Build a request binding `cn` to the pair's public key.
pub fn create_cert_request(pair: &KeyPair, cn: &str) -> Result<CertRequest, PkiError> {
    if cn.is_empty() {
        return Err(PkiError::EmptyCommonName);
    }
    Ok(CertRequest {
        subject_common_name: cn.to_string(),
        subject_public_key: pair.public.clone(),
    })
}

/// A signed binding of a subject name to a public key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    /// Monotonically increasing per issuer.
    pub serial: u64,
    pub subject_common_name: String,
    pub subject_public_key: PublicKey,
    pub issuer_common_name: String,
    /// Seconds since epoch, inclusive start of validity.
    pub not_before: i64,
    /// Seconds since epoch, exclusive end of validity.
    pub not_after: i64,
    /// Issuer signature over [`Certificate::to_be_signed_bytes`].
    pub signature: Signature,
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], PkiError> {
        if self.pos + n > self.buf.len() {
            return Err(PkiError::Decode("truncated input".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, PkiError> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64, PkiError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64, PkiError> {
        Ok(i64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<Vec<u8>, PkiError> {
        let len = u32::from_be_bytes(self.take(4)?.try_into().unwrap()) as usize;
        Ok(self.take(len)?.to_vec())
    }

    fn string(&mut self) -> Result<String, PkiError> {
        String::from_utf8(self.bytes()?).map_err(|e| PkiError::Decode(e.to_string()))
    }

    fn finish(self) -> Result<(), PkiError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(PkiError::Decode("trailing bytes".into()))
        }
    }
}

impl Certificate {
    /// Canonical bytes covered by the issuer signature.
    ///
    /// Layout: serial u64 | subject cn | scheme tag u8 | subject key |
    /// issuer cn | not_before i64 | not_after i64. Variable-length fields are
    /// u32-big-endian length prefixed.
    pub fn to_be_signed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.subject_public_key.bytes.len());
        out.extend_from_slice(&self.serial.to_be_bytes());
        put_bytes(&mut out, self.subject_common_name.as_bytes());
        out.push(self.subject_public_key.scheme.tag());
        put_bytes(&mut out, &self.subject_public_key.bytes);
        put_bytes(&mut out, self.issuer_common_name.as_bytes());
        out.extend_from_slice(&self.not_before.to_be_bytes());
        out.extend_from_slice(&self.not_after.to_be_bytes());
        out
    }

    /// Full canonical encoding: to-be-signed bytes followed by the signature.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.to_be_signed_bytes();
        put_bytes(&mut out, &self.signature.0);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PkiError> {
        let mut r = Reader::new(bytes);
        let serial = r.u64()?;
        let subject_common_name = r.string()?;
        let scheme = SignatureScheme::from_tag(r.u8()?)?;
        let key_bytes = r.bytes()?;
        let issuer_common_name = r.string()?;
        let not_before = r.i64()?;
        let not_after = r.i64()?;
        let signature = Signature(r.bytes()?);
        r.finish()?;
        Ok(Certificate {
            serial,
            subject_common_name,
            subject_public_key: PublicKey {
                scheme,
                bytes: key_bytes,
            },
            issuer_common_name,
            not_before,
            not_after,
            signature,
        })
    }

    /// Length of the validity window in seconds.
    pub fn validity_secs(&self) -> i64 {
        self.not_after - self.not_before
    }

    pub fn is_self_signed(&self) -> bool {
        self.issuer_common_name == self.subject_common_name
    }

    /// Armored text block, base64 of [`Certificate::encode`] wrapped at 64 columns.
    pub fn to_armored(&self) -> String {
        let b64 = BASE64.encode(self.encode());
        let mut out = String::from("-----BEGIN TRUFL CERTIFICATE-----\n");
        for chunk in b64.as_bytes().chunks(64) {
            out.push_str(std::str::from_utf8(chunk).unwrap());
            out.push('\n');
        }
        out.push_str("-----END TRUFL CERTIFICATE-----\n");
        out
    }

    pub fn from_armored(text: &str) -> Result<Self, PkiError> {
        let certs = parse_armored_bundle(text)?;
        match certs.len() {
            1 => Ok(certs.into_iter().next().unwrap()),
            n => Err(PkiError::Armor(format!("expected 1 certificate, found {n}"))),
        }
    }
}

/// Parse every armored certificate block in `text`, in order.
pub fn parse_armored_bundle(text: &str) -> Result<Vec<Certificate>, PkiError> {
    const BEGIN: &str = "-----BEGIN TRUFL CERTIFICATE-----";
    const END: &str = "-----END TRUFL CERTIFICATE-----";
    let mut certs = Vec::new();
    let mut body: Option<String> = None;
    for line in text.lines() {
        let line = line.trim();
        if line == BEGIN {
            if body.is_some() {
                return Err(PkiError::Armor("nested BEGIN marker".into()));
            }
            body = Some(String::new());
        } else if line == END {
            let b64 = body.take().ok_or_else(|| PkiError::Armor("END without BEGIN".into()))?;
            let raw = BASE64
                .decode(b64.as_bytes())
                .map_err(|e| PkiError::Armor(e.to_string()))?;
            certs.push(Certificate::decode(&raw)?);
        } else if let Some(b) = body.as_mut() {
            b.push_str(line);
        }
    }
    if body.is_some() {
        return Err(PkiError::Armor("unterminated BEGIN block".into()));
    }
    Ok(certs)
}

/// A self-signed certificate in the verifier's trusted set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustAnchor(Certificate);

impl TrustAnchor {
    /// Wrap a certificate after checking that it is self-signed and
    /// self-verifies.
    pub fn new(cert: Certificate, provider: &dyn CryptoProvider) -> Result<Self, PkiError> {
        let ok = cert.is_self_signed()
            && provider.verify(
                &cert.subject_public_key,
                &cert.to_be_signed_bytes(),
                &cert.signature,
            );
        if ok {
            Ok(TrustAnchor(cert))
        } else {
            Err(PkiError::NotAnAnchor {
                subject: cert.subject_common_name,
            })
        }
    }

    pub fn certificate(&self) -> &Certificate {
        &self.0
    }

    pub fn subject(&self) -> &str {
        &self.0.subject_common_name
    }
}

/// Ordered certificates, leaf first, anchor-most certificate last.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CertChain(pub Vec<Certificate>);

impl CertChain {
    pub fn new(certs: Vec<Certificate>) -> Self {
        CertChain(certs)
    }

    pub fn leaf(&self) -> Option<&Certificate> {
        self.0.first()
    }

    /// Copy of this chain with the last certificate swapped for `cert`.
    ///
    /// Used for federation: replace a root's self-signed certificate with the
    /// cross-certificate a bridge issued for that root.
    pub fn rebased(&self, cert: Certificate) -> CertChain {
        let mut certs = self.0.clone();
        certs.pop();
        certs.push(cert);
        CertChain(certs)
    }
}

/// Why a chain failed to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainFailure {
    /// A signature does not verify under the next certificate's key.
    BadSignature,
    /// `now` is outside some certificate's validity window.
    Expired,
    /// The chain does not terminate at any supplied anchor.
    NoAnchor,
    /// Adjacent certificates do not name each other.
    BrokenLinkage,
}

impl fmt::Display for ChainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainFailure::BadSignature => write!(f, "bad-signature"),
            ChainFailure::Expired => write!(f, "expired"),
            ChainFailure::NoAnchor => write!(f, "no-anchor"),
            ChainFailure::BrokenLinkage => write!(f, "broken-linkage"),
        }
    }
}

/// Verify a chain bottom-up against a set of anchors at time `now`.
///
/// Checks run in a fixed order and the first failure wins: linkage, validity
/// windows, anchor reachability, then signatures. A chain passes when every
/// adjacent pair links by name and signature, every certificate's window
/// contains `now`, and the last certificate's issuer is one of the anchors
/// (a self-signed anchor as the last element anchors itself).
pub fn verify_chain(
    provider: &dyn CryptoProvider,
    chain: &CertChain,
    anchors: &[TrustAnchor],
    now: i64,
) -> Result<(), ChainFailure> {
    let certs = &chain.0;
    if certs.is_empty() {
        return Err(ChainFailure::BrokenLinkage);
    }
    for pair in certs.windows(2) {
        if pair[0].issuer_common_name != pair[1].subject_common_name {
            return Err(ChainFailure::BrokenLinkage);
        }
    }
    for cert in certs {
        if now < cert.not_before || now > cert.not_after {
            return Err(ChainFailure::Expired);
        }
    }
    let last = certs.last().unwrap();
    let anchor = anchors
        .iter()
        .find(|a| a.subject() == last.issuer_common_name)
        .ok_or(ChainFailure::NoAnchor)?;
    for pair in certs.windows(2) {
        if !provider.verify(
            &pair[1].subject_public_key,
            &pair[0].to_be_signed_bytes(),
            &pair[0].signature,
        ) {
            return Err(ChainFailure::BadSignature);
        }
    }
    if !provider.verify(
        &anchor.certificate().subject_public_key,
        &last.to_be_signed_bytes(),
        &last.signature,
    ) {
        return Err(ChainFailure::BadSignature);
    }
    Ok(())
}

/// A certificate authority: its certificate, its keypair, and a serial
/// counter for the certificates it issues.
///
/// Serial allocation is atomic so one issuer may be shared across issuance
/// workers.
#[derive(Debug)]
pub struct Issuer {
    pub certificate: Certificate,
    keypair: KeyPair,
    next_serial: AtomicU64,
}

impl Issuer {
    /// Bind an issuing keypair to its certificate. Serials continue after any
    /// the issuer already spent on its own certificate (a self-signed issuer
    /// starts issuing at `serial + 1`).
    pub fn new(certificate: Certificate, keypair: KeyPair) -> Result<Self, PkiError> {
        if certificate.subject_public_key != keypair.public {
            return Err(PkiError::AuthorityMismatch {
                issuer: certificate.subject_common_name,
            });
        }
        let first = if certificate.is_self_signed() {
            certificate.serial + 1
        } else {
            1
        };
        Ok(Issuer {
            certificate,
            keypair,
            next_serial: AtomicU64::new(first),
        })
    }

    pub fn keypair(&self) -> &KeyPair {
        &self.keypair
    }

    /// Issue a certificate for `req` valid for `validity_secs` starting at
    /// `not_before`.
    pub fn issue(
        &self,
        provider: &dyn CryptoProvider,
        req: &CertRequest,
        validity_secs: i64,
        not_before: i64,
    ) -> Result<Certificate, PkiError> {
        if validity_secs <= 0 {
            return Err(PkiError::NonPositiveValidity(validity_secs));
        }
        if req.subject_common_name.is_empty() {
            return Err(PkiError::EmptyCommonName);
        }
        let serial = self.next_serial.fetch_add(1, Ordering::Relaxed);
        let mut cert = Certificate {
            serial,
            subject_common_name: req.subject_common_name.clone(),
            subject_public_key: req.subject_public_key.clone(),
            issuer_common_name: self.certificate.subject_common_name.clone(),
            not_before,
            not_after: not_before + validity_secs,
            signature: Signature(Vec::new()),
        };
        cert.signature = provider.sign(&self.keypair.private, &cert.to_be_signed_bytes())?;
        Ok(cert)
    }

    /// Create a self-signed authority: generates a keypair, self-issues
    /// certificate serial 1, and returns the issuer plus its anchor.
    pub fn self_signed(
        provider: &dyn CryptoProvider,
        name: &str,
        strength: KeyStrength,
        validity_secs: i64,
        now: i64,
    ) -> Result<(Issuer, TrustAnchor), PkiError> {
        if name.is_empty() {
            return Err(PkiError::EmptyCommonName);
        }
        if validity_secs <= 0 {
            return Err(PkiError::NonPositiveValidity(validity_secs));
        }
        let keypair = provider.generate_keypair(strength)?;
        let mut cert = Certificate {
            serial: 1,
            subject_common_name: name.to_string(),
            subject_public_key: keypair.public.clone(),
            issuer_common_name: name.to_string(),
            not_before: now,
            not_after: now + validity_secs,
            signature: Signature(Vec::new()),
        };
        cert.signature = provider.sign(&keypair.private, &cert.to_be_signed_bytes())?;
        let anchor = TrustAnchor::new(cert.clone(), provider)?;
        Ok((Issuer::new(cert, keypair)?, anchor))
    }
}

/// Cross-certify two roots through a bridge authority.
///
/// The bridge issues one certificate per root public key. A chain that ends
/// in root B's self-signed certificate can then be rebased onto the returned
/// B-certificate and verified from any anchor set containing the bridge, and
/// symmetrically for A.
pub fn cross_certify(
    provider: &dyn CryptoProvider,
    root_a: &TrustAnchor,
    root_b: &TrustAnchor,
    bridge: &Issuer,
    validity_secs: i64,
    now: i64,
) -> Result<(Certificate, Certificate), PkiError> {
    if !bridge.certificate.is_self_signed() {
        return Err(PkiError::NotAnAnchor {
            subject: bridge.certificate.subject_common_name.clone(),
        });
    }
    // Re-validate the anchors under this provider; TrustAnchor construction
    // could have happened elsewhere.
    for anchor in [root_a, root_b] {
        TrustAnchor::new(anchor.certificate().clone(), provider)?;
    }
    let req_a = CertRequest {
        subject_common_name: root_a.subject().to_string(),
        subject_public_key: root_a.certificate().subject_public_key.clone(),
    };
    let req_b = CertRequest {
        subject_common_name: root_b.subject().to_string(),
        subject_public_key: root_b.certificate().subject_public_key.clone(),
    };
    let cert_a = bridge.issue(provider, &req_a, validity_secs, now)?;
    let cert_b = bridge.issue(provider, &req_b, validity_secs, now)?;
    Ok((cert_a, cert_b))
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(de)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}
