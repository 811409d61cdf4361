//! Client-side cryptography.
//!
//! * identities: a secp256k1 ECDSA signing key plus a secp256k1 encryption
//!   key, named by the SHA-256 of the compressed signing key;
//! * segment data-encryption keys (DEKs) and AES-256-GCM sealing;
//! * DEK files: one DEK wrapped separately for every recipient (ECIES:
//!   ephemeral ECDH, HKDF-SHA256, AES-256-GCM);
//! * commit signatures.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use hkdf::Hkdf;
use k256::ecdsa::signature::{Signer, Verifier};
use k256::ecdsa::{Signature, SigningKey, VerifyingKey};
use k256::elliptic_curve::rand_core::{OsRng, RngCore};
use k256::elliptic_curve::sec1::ToEncodedPoint;
use k256::{PublicKey, SecretKey};
use sha2::{Digest, Sha256};
use zeroize::Zeroizing;

use crate::cas::Cid;

pub const DEK_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const PUBLIC_KEY_LEN: usize = 33;
pub const MIN_SEED_LEN: usize = 32;

const DEK_FILE_MAGIC: &[u8; 5] = b"EDGK1";
const WRAP_INFO: &[u8] = b"edgchain-vault/dek-wrap/v1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("seed must be at least {MIN_SEED_LEN} bytes")]
    SeedTooShort,
    #[error("system entropy source unavailable")]
    EntropyUnavailable,
    #[error("nonce counter exhausted")]
    NonceExhaustion,
    #[error("authentication failed")]
    AuthenticationFailure,
    #[error("recipient {0} listed twice")]
    DuplicateRecipient(IdentityId),
    #[error("a DEK file needs at least one recipient")]
    EmptyRecipients,
    #[error("DEK file versions start at 1")]
    InvalidVersion,
    #[error("malformed DEK file: {0}")]
    MalformedDekFile(&'static str),
    #[error("identity is not a recipient of this DEK file")]
    NotARecipient,
    #[error("wrapped DEK could not be opened")]
    UnwrapFailure,
    #[error("malformed public key")]
    MalformedKey,
    #[error("malformed sealed blob")]
    MalformedSealedBlob,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

macro_rules! hex_id {
    ($name:ident) => {
        impl $name {
            pub const fn from_bytes(bytes: [u8; 32]) -> Self {
                $name(bytes)
            }

            pub fn as_bytes(&self) -> &[u8; 32] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                ::hex::encode(self.0)
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl ::std::fmt::Debug for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                write!(f, "{}({})", stringify!($name), &self.to_hex()[..12])
            }
        }

        impl ::std::str::FromStr for $name {
            type Err = ::hex::FromHexError;

            fn from_str(s: &str) -> ::std::result::Result<Self, Self::Err> {
                let mut out = [0u8; 32];
                ::hex::decode_to_slice(s, &mut out)?;
                Ok($name(out))
            }
        }

        impl ::serde::Serialize for $name {
            fn serialize<S: ::serde::Serializer>(&self, serializer: S) -> ::std::result::Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_hex())
            }
        }

        impl<'de> ::serde::Deserialize<'de> for $name {
            fn deserialize<D: ::serde::Deserializer<'de>>(deserializer: D) -> ::std::result::Result<Self, D::Error> {
                let s = <String as ::serde::Deserialize>::deserialize(deserializer)?;
                s.parse().map_err(::serde::de::Error::custom)
            }
        }
    };
}
pub(crate) use hex_id;

/// SHA-256 of a compressed signing public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IdentityId([u8; 32]);
hex_id!(IdentityId);

/// Compressed SEC1 secp256k1 verifying key.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SigningPublicKey(VerifyingKey);

impl SigningPublicKey {
    pub fn from_sec1(bytes: &[u8]) -> Result<Self> {
        VerifyingKey::from_sec1_bytes(bytes)
            .map(SigningPublicKey)
            .map_err(|_| Error::MalformedKey)
    }

    pub fn to_sec1(&self) -> [u8; PUBLIC_KEY_LEN] {
        let point = self.0.to_encoded_point(true);
        point.as_bytes().try_into().expect("compressed point is 33 bytes")
    }

    /// Identity id derived from this key.
    pub fn id(&self) -> IdentityId {
        IdentityId(Sha256::digest(self.to_sec1()).into())
    }
}

impl fmt::Debug for SigningPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigningPublicKey({})", hex::encode(self.to_sec1()))
    }
}

/// Compressed SEC1 secp256k1 key used to wrap DEKs.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct EncryptionPublicKey(PublicKey);

impl EncryptionPublicKey {
    pub fn from_sec1(bytes: &[u8]) -> Result<Self> {
        PublicKey::from_sec1_bytes(bytes)
            .map(EncryptionPublicKey)
            .map_err(|_| Error::MalformedKey)
    }

    pub fn to_sec1(&self) -> [u8; PUBLIC_KEY_LEN] {
        let point = self.0.to_encoded_point(true);
        point.as_bytes().try_into().expect("compressed point is 33 bytes")
    }
}

impl fmt::Debug for EncryptionPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EncryptionPublicKey({})", hex::encode(self.to_sec1()))
    }
}

/// The shareable half of an [`Identity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PublicIdentity {
    pub id: IdentityId,
    pub signing: SigningPublicKey,
    pub encryption: EncryptionPublicKey,
}

impl PublicIdentity {
    pub fn new(signing: SigningPublicKey, encryption: EncryptionPublicKey) -> Self {
        PublicIdentity {
            id: signing.id(),
            signing,
            encryption,
        }
    }
}

/// A participant's full key material.
///
/// Deliberately not `Serialize`: the only way secret halves leave memory
/// is the passphrase-sealed keystore.
#[derive(Clone)]
pub struct Identity {
    public: PublicIdentity,
    signing: SigningKey,
    encryption: SecretKey,
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Identity")
            .field("id", &self.public.id)
            .finish_non_exhaustive()
    }
}

impl Identity {
    pub fn id(&self) -> IdentityId {
        self.public.id
    }

    pub fn public(&self) -> &PublicIdentity {
        &self.public
    }

    fn from_keys(signing: SigningKey, encryption: SecretKey) -> Self {
        let signing_pub = SigningPublicKey(*signing.verifying_key());
        let encryption_pub = EncryptionPublicKey(encryption.public_key());
        Identity {
            public: PublicIdentity::new(signing_pub, encryption_pub),
            signing,
            encryption,
        }
    }

    /// Signing scalar followed by encryption scalar.
    pub(crate) fn secret_bytes(&self) -> Zeroizing<Vec<u8>> {
        let mut out = Zeroizing::new(Vec::with_capacity(64));
        out.extend_from_slice(&self.signing.to_bytes());
        out.extend_from_slice(&self.encryption.to_bytes());
        out
    }

    pub(crate) fn from_secret_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != 64 {
            return Err(Error::MalformedKey);
        }
        let signing = SigningKey::from_slice(&bytes[..32]).map_err(|_| Error::MalformedKey)?;
        let encryption = SecretKey::from_slice(&bytes[32..]).map_err(|_| Error::MalformedKey)?;
        Ok(Identity::from_keys(signing, encryption))
    }
}

/// Creates an identity. With a seed the result is a pure function of it,
/// which only tests and reproducible demos should rely on.
pub fn keygen(seed: Option<&[u8]>) -> Result<Identity> {
    match seed {
        Some(seed) if seed.len() < MIN_SEED_LEN => Err(Error::SeedTooShort),
        Some(seed) => {
            let signing = derive_scalar(seed, b"sign");
            let encryption = derive_scalar(seed, b"encrypt");
            Ok(Identity::from_keys(SigningKey::from(&signing), encryption))
        }
        None => {
            let signing = random_secret_key()?;
            let encryption = random_secret_key()?;
            Ok(Identity::from_keys(SigningKey::from(&signing), encryption))
        }
    }
}

fn derive_scalar(seed: &[u8], label: &[u8]) -> SecretKey {
    for counter in 0u32.. {
        let mut h = Sha256::new();
        h.update(b"edgchain-vault/keygen/v1");
        h.update(label);
        h.update(counter.to_be_bytes());
        h.update(seed);
        let bytes = Zeroizing::new(<[u8; 32]>::from(h.finalize()));
        if let Ok(key) = SecretKey::from_slice(bytes.as_ref()) {
            return key;
        }
    }
    unreachable!("a valid scalar is found with overwhelming probability")
}

pub(crate) fn fill_random(buf: &mut [u8]) -> Result<()> {
    OsRng.try_fill_bytes(buf).map_err(|_| Error::EntropyUnavailable)
}

fn random_secret_key() -> Result<SecretKey> {
    loop {
        let mut bytes = Zeroizing::new([0u8; 32]);
        fill_random(bytes.as_mut())?;
        if let Ok(key) = SecretKey::from_slice(bytes.as_ref()) {
            return Ok(key);
        }
    }
}

/// 256-bit data-encryption key for one segment.
#[derive(Clone, PartialEq, Eq)]
pub struct Dek(Zeroizing<[u8; DEK_LEN]>);

impl Dek {
    pub fn from_bytes(bytes: [u8; DEK_LEN]) -> Self {
        Dek(Zeroizing::new(bytes))
    }

    pub fn as_bytes(&self) -> &[u8; DEK_LEN] {
        &self.0
    }
}

impl fmt::Debug for Dek {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Dek(..)")
    }
}

pub fn generate_dek() -> Result<Dek> {
    let mut key = Zeroizing::new([0u8; DEK_LEN]);
    fill_random(key.as_mut())?;
    Ok(Dek(key))
}

/// Nonce source: 4-byte random prefix followed by an 8-byte counter.
pub struct NonceSequence {
    prefix: [u8; 4],
    counter: AtomicU64,
}

impl NonceSequence {
    pub fn new() -> Result<Self> {
        let mut prefix = [0u8; 4];
        fill_random(&mut prefix)?;
        Ok(Self::starting_at(prefix, 0))
    }

    pub fn starting_at(prefix: [u8; 4], counter: u64) -> Self {
        NonceSequence {
            prefix,
            counter: AtomicU64::new(counter),
        }
    }

    pub fn next_nonce(&self) -> Result<[u8; NONCE_LEN]> {
        let n = self
            .counter
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |c| c.checked_add(1))
            .map_err(|_| Error::NonceExhaustion)?;
        let mut nonce = [0u8; NONCE_LEN];
        nonce[..4].copy_from_slice(&self.prefix);
        nonce[4..].copy_from_slice(&n.to_be_bytes());
        Ok(nonce)
    }
}

fn process_nonces() -> Result<&'static NonceSequence> {
    static NONCES: OnceLock<NonceSequence> = OnceLock::new();
    if let Some(seq) = NONCES.get() {
        return Ok(seq);
    }
    let fresh = NonceSequence::new()?;
    Ok(NONCES.get_or_init(|| fresh))
}

/// AES-256-GCM output: `nonce ‖ ciphertext ‖ tag` on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedBlob {
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl SealedBlob {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(NONCE_LEN + self.ciphertext.len() + TAG_LEN);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < NONCE_LEN + TAG_LEN {
            return Err(Error::MalformedSealedBlob);
        }
        let (nonce, rest) = bytes.split_at(NONCE_LEN);
        let (ciphertext, tag) = rest.split_at(rest.len() - TAG_LEN);
        Ok(SealedBlob {
            nonce: nonce.try_into().unwrap(),
            ciphertext: ciphertext.to_vec(),
            tag: tag.try_into().unwrap(),
        })
    }
}

fn segment_aad(segment: Option<&Cid>) -> &[u8] {
    segment.map_or(&[], |s| s.digest().as_slice())
}

/// Seals `plain` under `dek` with a fresh process-unique nonce. Blobs that
/// belong to a known segment carry its id as associated data.
pub fn encrypt_blob(plain: &[u8], dek: &Dek, segment: Option<&Cid>) -> Result<SealedBlob> {
    let nonce = process_nonces()?.next_nonce()?;
    seal_with_nonce(plain, dek, &nonce, segment_aad(segment))
}

/// Like [`encrypt_blob`] but drawing nonces from `nonces`.
pub fn encrypt_blob_with(nonces: &NonceSequence, plain: &[u8], dek: &Dek, segment: Option<&Cid>) -> Result<SealedBlob> {
    let nonce = nonces.next_nonce()?;
    seal_with_nonce(plain, dek, &nonce, segment_aad(segment))
}

/// Raw AES-256-GCM with a caller-chosen nonce. Reusing a nonce under the
/// same key breaks GCM; only conformance tests should call this directly.
pub fn seal_with_nonce(plain: &[u8], dek: &Dek, nonce: &[u8; NONCE_LEN], aad: &[u8]) -> Result<SealedBlob> {
    let cipher = Aes256Gcm::new(dek.as_bytes().into());
    let mut out = cipher
        .encrypt(Nonce::from_slice(nonce), Payload { msg: plain, aad })
        .map_err(|_| Error::AuthenticationFailure)?;
    let tag: [u8; TAG_LEN] = out[out.len() - TAG_LEN..].try_into().unwrap();
    out.truncate(out.len() - TAG_LEN);
    Ok(SealedBlob {
        nonce: *nonce,
        ciphertext: out,
        tag,
    })
}

pub fn decrypt_blob(sealed: &SealedBlob, dek: &Dek, segment: Option<&Cid>) -> Result<Vec<u8>> {
    open_with_aad(sealed, dek, segment_aad(segment))
}

pub fn open_with_aad(sealed: &SealedBlob, dek: &Dek, aad: &[u8]) -> Result<Vec<u8>> {
    let cipher = Aes256Gcm::new(dek.as_bytes().into());
    let mut buf = Vec::with_capacity(sealed.ciphertext.len() + TAG_LEN);
    buf.extend_from_slice(&sealed.ciphertext);
    buf.extend_from_slice(&sealed.tag);
    cipher
        .decrypt(Nonce::from_slice(&sealed.nonce), Payload { msg: &buf, aad })
        .map_err(|_| Error::AuthenticationFailure)
}

/// Public-key encryption of a DEK for one recipient.
pub trait WrapScheme {
    fn wrap(&self, dek: &Dek, recipient: &EncryptionPublicKey, context: &[u8]) -> Result<Vec<u8>>;
    fn unwrap(&self, wrapped: &[u8], me: &Identity, context: &[u8]) -> Result<Dek>;
}

/// ECIES over secp256k1: `ephemeral_pub(33) ‖ AES-256-GCM(dek) ‖ tag`.
#[derive(Debug, Clone, Copy, Default)]
pub struct EciesSecp256k1;

impl EciesSecp256k1 {
    const WRAPPED_LEN: usize = PUBLIC_KEY_LEN + DEK_LEN + TAG_LEN;

    fn kek(shared: &[u8], ephemeral: &[u8], recipient: &[u8]) -> Dek {
        let hk = Hkdf::<Sha256>::new(Some(ephemeral), shared);
        let mut info = Vec::with_capacity(WRAP_INFO.len() + PUBLIC_KEY_LEN);
        info.extend_from_slice(WRAP_INFO);
        info.extend_from_slice(recipient);
        let mut kek = [0u8; DEK_LEN];
        hk.expand(&info, &mut kek).expect("32 bytes is a valid HKDF length");
        Dek::from_bytes(kek)
    }
}

impl WrapScheme for EciesSecp256k1 {
    fn wrap(&self, dek: &Dek, recipient: &EncryptionPublicKey, context: &[u8]) -> Result<Vec<u8>> {
        let ephemeral = random_secret_key()?;
        let ephemeral_pub = EncryptionPublicKey(ephemeral.public_key()).to_sec1();
        let shared = k256::ecdh::diffie_hellman(ephemeral.to_nonzero_scalar(), recipient.0.as_affine());
        let kek = Self::kek(shared.raw_secret_bytes(), &ephemeral_pub, &recipient.to_sec1());
        // Each wrap derives a fresh key, so a fixed nonce is never reused.
        let sealed = seal_with_nonce(dek.as_bytes(), &kek, &[0u8; NONCE_LEN], context)?;
        let mut out = Vec::with_capacity(Self::WRAPPED_LEN);
        out.extend_from_slice(&ephemeral_pub);
        out.extend_from_slice(&sealed.ciphertext);
        out.extend_from_slice(&sealed.tag);
        Ok(out)
    }

    fn unwrap(&self, wrapped: &[u8], me: &Identity, context: &[u8]) -> Result<Dek> {
        if wrapped.len() != Self::WRAPPED_LEN {
            return Err(Error::UnwrapFailure);
        }
        let (ephemeral_pub, rest) = wrapped.split_at(PUBLIC_KEY_LEN);
        let ephemeral = PublicKey::from_sec1_bytes(ephemeral_pub).map_err(|_| Error::UnwrapFailure)?;
        let shared = k256::ecdh::diffie_hellman(me.encryption.to_nonzero_scalar(), ephemeral.as_affine());
        let kek = Self::kek(
            shared.raw_secret_bytes(),
            ephemeral_pub,
            &me.public.encryption.to_sec1(),
        );
        let sealed = SealedBlob {
            nonce: [0u8; NONCE_LEN],
            ciphertext: rest[..DEK_LEN].to_vec(),
            tag: rest[DEK_LEN..].try_into().unwrap(),
        };
        let plain = Zeroizing::new(open_with_aad(&sealed, &kek, context).map_err(|_| Error::UnwrapFailure)?);
        let key: [u8; DEK_LEN] = plain.as_slice().try_into().map_err(|_| Error::UnwrapFailure)?;
        Ok(Dek::from_bytes(key))
    }
}

/// Per-recipient wrapped copies of one segment DEK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DekFile {
    pub segment_id: Cid,
    pub version: u64,
    pub entries: BTreeMap<IdentityId, Vec<u8>>,
}

impl DekFile {
    pub fn recipients(&self) -> impl Iterator<Item = &IdentityId> {
        self.entries.keys()
    }

    pub fn contains(&self, id: &IdentityId) -> bool {
        self.entries.contains_key(id)
    }

    /// Canonical encoding: `"EDGK1" ‖ segment_id ‖ version(u64 BE) ‖
    /// count(u32 BE) ‖ { id ‖ len(u32 BE) ‖ wrapped }*` sorted by id.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DEK_FILE_MAGIC);
        out.extend_from_slice(self.segment_id.digest());
        out.extend_from_slice(&self.version.to_be_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_be_bytes());
        for (id, wrapped) in &self.entries {
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&(wrapped.len() as u32).to_be_bytes());
            out.extend_from_slice(wrapped);
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut r = crate::wire::Reader::new(bytes);
        let malformed = |_| Error::MalformedDekFile("truncated");
        if r.take(5).map_err(malformed)? != DEK_FILE_MAGIC {
            return Err(Error::MalformedDekFile("bad magic"));
        }
        let segment_id = Cid::from_digest(r.array().map_err(malformed)?);
        let version = r.u64().map_err(malformed)?;
        if version == 0 {
            return Err(Error::MalformedDekFile("version 0"));
        }
        let count = r.u32().map_err(malformed)?;
        if count == 0 {
            return Err(Error::MalformedDekFile("no entries"));
        }
        let mut entries = BTreeMap::new();
        let mut last: Option<IdentityId> = None;
        for _ in 0..count {
            let id = IdentityId(r.array().map_err(malformed)?);
            if last.is_some_and(|prev| prev >= id) {
                return Err(Error::MalformedDekFile("entries not strictly sorted"));
            }
            let len = r.u32().map_err(malformed)? as usize;
            let wrapped = r.take(len).map_err(malformed)?.to_vec();
            entries.insert(id, wrapped);
            last = Some(id);
        }
        if !r.is_empty() {
            return Err(Error::MalformedDekFile("trailing bytes"));
        }
        Ok(DekFile {
            segment_id,
            version,
            entries,
        })
    }
}

fn wrap_context(segment_id: &Cid, recipient: &IdentityId) -> [u8; 64] {
    let mut ctx = [0u8; 64];
    ctx[..32].copy_from_slice(segment_id.digest());
    ctx[32..].copy_from_slice(recipient.as_bytes());
    ctx
}

/// Wraps `dek` for each recipient and returns the canonical DEK file bytes.
pub fn build_dek_file(
    dek: &Dek,
    segment_id: &Cid,
    recipients: &[(IdentityId, EncryptionPublicKey)],
    version: u64,
) -> Result<Vec<u8>> {
    build_dek_file_with(&EciesSecp256k1, dek, segment_id, recipients, version)
}

pub fn build_dek_file_with(
    scheme: &dyn WrapScheme,
    dek: &Dek,
    segment_id: &Cid,
    recipients: &[(IdentityId, EncryptionPublicKey)],
    version: u64,
) -> Result<Vec<u8>> {
    if recipients.is_empty() {
        return Err(Error::EmptyRecipients);
    }
    if version == 0 {
        return Err(Error::InvalidVersion);
    }
    let mut entries = BTreeMap::new();
    for (id, key) in recipients {
        if entries.contains_key(id) {
            return Err(Error::DuplicateRecipient(*id));
        }
        let wrapped = scheme.wrap(dek, key, &wrap_context(segment_id, id))?;
        entries.insert(*id, wrapped);
    }
    Ok(DekFile {
        segment_id: *segment_id,
        version,
        entries,
    }
    .to_bytes())
}

pub fn open_dek_file(bytes: &[u8], me: &Identity) -> Result<Dek> {
    open_dek_file_with(&EciesSecp256k1, bytes, me)
}

pub fn open_dek_file_with(scheme: &dyn WrapScheme, bytes: &[u8], me: &Identity) -> Result<Dek> {
    let file = DekFile::parse(bytes)?;
    let wrapped = file.entries.get(&me.id()).ok_or(Error::NotARecipient)?;
    scheme.unwrap(wrapped, me, &wrap_context(&file.segment_id, &me.id()))
}

pub const SIGNATURE_LEN: usize = 64;

/// ECDSA/secp256k1 over SHA-256(payload), as 64-byte `r ‖ s`.
pub fn sign(payload: &[u8], me: &Identity) -> Vec<u8> {
    let sig: Signature = me.signing.sign(payload);
    sig.to_bytes().to_vec()
}

pub fn verify_sig(payload: &[u8], sig: &[u8], signer: &SigningPublicKey) -> bool {
    match Signature::from_slice(sig) {
        Ok(sig) => signer.0.verify(payload, &sig).is_ok(),
        Err(_) => false,
    }
}
