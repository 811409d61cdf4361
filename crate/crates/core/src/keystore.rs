//! Passphrase-protected identity files.
//!
//! Each identity lives in `<dir>/<name>.json`. Public keys are stored in
//! the clear so members can be looked up without unlocking; the 64 secret
//! bytes are sealed with AES-256-GCM under an Argon2id-derived key, with
//! the identity id as associated data.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use argon2::{Algorithm, Argon2, Params, Version};
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use crate::cryptbox::{self, EncryptionPublicKey, Identity, IdentityId, PublicIdentity, SigningPublicKey};

const FORMAT: &str = "edg-identity/v1";
const SALT_LEN: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid identity name {0:?}")]
    InvalidName(String),
    #[error("identity {0:?} already exists")]
    Exists(String),
    #[error("identity {0:?} not found")]
    NotFound(String),
    #[error("wrong passphrase for identity {0:?}")]
    WrongPassphrase(String),
    #[error("identity file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error(transparent)]
    Crypto(#[from] cryptbox::Error),
    #[error("keystore i/o failure: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Argon2id cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfParams {
    pub m_cost_kib: u32,
    pub t_cost: u32,
    pub p_cost: u32,
}

impl Default for KdfParams {
    fn default() -> Self {
        KdfParams {
            m_cost_kib: 19 * 1024,
            t_cost: 2,
            p_cost: 1,
        }
    }
}

impl KdfParams {
    /// Cheap parameters for tests and throwaway demos.
    pub fn insecure_fast() -> Self {
        KdfParams {
            m_cost_kib: 64,
            t_cost: 1,
            p_cost: 1,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct IdentityFile {
    format: String,
    name: String,
    id: IdentityId,
    signing_public: String,
    encryption_public: String,
    kdf: KdfParams,
    salt: String,
    nonce: String,
    sealed_secret: String,
}

#[derive(Debug, Clone)]
pub struct Keystore {
    dir: PathBuf,
    kdf: KdfParams,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || b == b'.')
        && !name.starts_with('.')
}

fn derive_key(passphrase: &[u8], salt: &[u8], kdf: &KdfParams) -> Result<Zeroizing<[u8; 32]>, String> {
    let params = Params::new(kdf.m_cost_kib, kdf.t_cost, kdf.p_cost, Some(32)).map_err(|e| e.to_string())?;
    let mut key = Zeroizing::new([0u8; 32]);
    Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
        .hash_password_into(passphrase, salt, key.as_mut())
        .map_err(|e| e.to_string())?;
    Ok(key)
}

impl Keystore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Keystore {
            dir,
            kdf: KdfParams::default(),
        })
    }

    pub fn with_kdf(mut self, kdf: KdfParams) -> Self {
        self.kdf = kdf;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, name: &str) -> Result<PathBuf> {
        if !valid_name(name) {
            return Err(Error::InvalidName(name.to_string()));
        }
        Ok(self.dir.join(format!("{name}.json")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.path(name).is_ok_and(|p| p.exists())
    }

    pub fn save(&self, name: &str, identity: &Identity, passphrase: &[u8]) -> Result<()> {
        let path = self.path(name)?;
        let mut salt = [0u8; SALT_LEN];
        let mut nonce = [0u8; 12];
        cryptbox::fill_random(&mut salt)?;
        cryptbox::fill_random(&mut nonce)?;
        let key = derive_key(passphrase, &salt, &self.kdf).map_err(|reason| Error::Malformed {
            path: path.clone(),
            reason,
        })?;
        let secret = identity.secret_bytes();
        let sealed = Aes256Gcm::new(key.as_ref().into())
            .encrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: &secret,
                    aad: identity.id().as_bytes(),
                },
            )
            .map_err(|_| cryptbox::Error::AuthenticationFailure)?;
        let public = identity.public();
        let file = IdentityFile {
            format: FORMAT.to_string(),
            name: name.to_string(),
            id: identity.id(),
            signing_public: hex::encode(public.signing.to_sec1()),
            encryption_public: hex::encode(public.encryption.to_sec1()),
            kdf: self.kdf,
            salt: hex::encode(salt),
            nonce: hex::encode(nonce),
            sealed_secret: hex::encode(sealed),
        };
        let json = serde_json::to_vec_pretty(&file).expect("identity file serializes");

        let mut out = match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => return Err(Error::Exists(name.to_string())),
            Err(e) => return Err(e.into()),
        };
        out.write_all(&json)?;
        out.sync_all()?;
        Ok(())
    }

    /// Generates and stores a new identity.
    pub fn generate(&self, name: &str, passphrase: &[u8]) -> Result<Identity> {
        if self.contains(name) {
            return Err(Error::Exists(name.to_string()));
        }
        let identity = cryptbox::keygen(None)?;
        self.save(name, &identity, passphrase)?;
        Ok(identity)
    }

    fn read(&self, name: &str) -> Result<(PathBuf, IdentityFile, PublicIdentity)> {
        let path = self.path(name)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(Error::NotFound(name.to_string())),
            Err(e) => return Err(e.into()),
        };
        let malformed = |reason: String| Error::Malformed {
            path: path.clone(),
            reason,
        };
        let file: IdentityFile = serde_json::from_slice(&bytes).map_err(|e| malformed(e.to_string()))?;
        if file.format != FORMAT {
            return Err(malformed(format!("unsupported format {:?}", file.format)));
        }
        let key_bytes = |s: &str| hex::decode(s).map_err(|e| malformed(e.to_string()));
        let signing = SigningPublicKey::from_sec1(&key_bytes(&file.signing_public)?)?;
        let encryption = EncryptionPublicKey::from_sec1(&key_bytes(&file.encryption_public)?)?;
        let public = PublicIdentity::new(signing, encryption);
        if public.id != file.id {
            return Err(malformed("id does not match signing key".into()));
        }
        Ok((path, file, public))
    }

    /// Public half of a stored identity; needs no passphrase.
    pub fn public(&self, name: &str) -> Result<PublicIdentity> {
        Ok(self.read(name)?.2)
    }

    pub fn unlock(&self, name: &str, passphrase: &[u8]) -> Result<Identity> {
        let (path, file, public) = self.read(name)?;
        let malformed = |reason: String| Error::Malformed {
            path: path.clone(),
            reason,
        };
        let salt = hex::decode(&file.salt).map_err(|e| malformed(e.to_string()))?;
        let nonce = hex::decode(&file.nonce).map_err(|e| malformed(e.to_string()))?;
        let sealed = hex::decode(&file.sealed_secret).map_err(|e| malformed(e.to_string()))?;
        if nonce.len() != 12 {
            return Err(malformed("nonce must be 12 bytes".into()));
        }
        let key = derive_key(passphrase, &salt, &file.kdf).map_err(malformed)?;
        let secret = Zeroizing::new(
            Aes256Gcm::new(key.as_ref().into())
                .decrypt(
                    Nonce::from_slice(&nonce),
                    Payload {
                        msg: &sealed,
                        aad: file.id.as_bytes(),
                    },
                )
                .map_err(|_| Error::WrongPassphrase(name.to_string()))?,
        );
        let identity = Identity::from_secret_bytes(&secret)?;
        if *identity.public() != public {
            return Err(malformed("secret keys do not match public keys".into()));
        }
        Ok(identity)
    }

    /// Stored identity names, sorted.
    pub fn list(&self) -> Result<Vec<String>> {
        let mut names = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            if let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".json")) {
                if valid_name(stem) {
                    names.push(stem.to_string());
                }
            }
        }
        names.sort();
        Ok(names)
    }

    /// Finds a stored identity by name or by hex id.
    pub fn resolve(&self, name_or_id: &str) -> Result<(String, PublicIdentity)> {
        if self.contains(name_or_id) {
            return Ok((name_or_id.to_string(), self.public(name_or_id)?));
        }
        if let Ok(id) = name_or_id.parse::<IdentityId>() {
            for name in self.list()? {
                let public = self.public(&name)?;
                if public.id == id {
                    return Ok((name, public));
                }
            }
        }
        Err(Error::NotFound(name_or_id.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> (tempfile::TempDir, Keystore) {
        let dir = tempfile::tempdir().unwrap();
        let ks = Keystore::open(dir.path()).unwrap().with_kdf(KdfParams::insecure_fast());
        (dir, ks)
    }

    #[test]
    fn roundtrip() {
        let (_d, ks) = store();
        let id = ks.generate("alice", b"pw").unwrap();
        let back = ks.unlock("alice", b"pw").unwrap();
        assert_eq!(back.public(), id.public());
        assert_eq!(ks.public("alice").unwrap(), *id.public());
        let sig = cryptbox::sign(b"m", &back);
        assert!(cryptbox::verify_sig(b"m", &sig, &id.public().signing));
    }

    #[test]
    fn wrong_passphrase() {
        let (_d, ks) = store();
        ks.generate("alice", b"pw").unwrap();
        assert!(matches!(ks.unlock("alice", b"nope"), Err(Error::WrongPassphrase(_))));
    }

    #[test]
    fn names_and_lookup() {
        let (_d, ks) = store();
        assert!(matches!(ks.generate("../x", b""), Err(Error::InvalidName(_))));
        assert!(matches!(ks.generate("", b""), Err(Error::InvalidName(_))));
        let b = ks.generate("bob", b"").unwrap();
        ks.generate("alice", b"").unwrap();
        assert!(matches!(ks.generate("bob", b""), Err(Error::Exists(_))));
        assert_eq!(ks.list().unwrap(), ["alice", "bob"]);
        assert_eq!(ks.resolve(&b.id().to_hex()).unwrap().0, "bob");
        assert_eq!(ks.resolve("bob").unwrap().1, *b.public());
        assert!(matches!(ks.resolve("carol"), Err(Error::NotFound(_))));
    }

    #[test]
    fn secret_not_stored_in_clear() {
        let (d, ks) = store();
        let id = ks.generate("alice", b"pw").unwrap();
        let file = fs::read_to_string(d.path().join("alice.json")).unwrap();
        let secret = id.secret_bytes();
        assert!(!file.contains(&hex::encode(&secret[..32])));
        assert!(!file.contains(&hex::encode(&secret[32..])));
    }

    #[test]
    fn tampered_file_rejected() {
        let (d, ks) = store();
        ks.generate("alice", b"pw").unwrap();
        let other = cryptbox::keygen(None).unwrap();
        let path = d.path().join("alice.json");
        let mut file: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        file["signing_public"] = hex::encode(other.public().signing.to_sec1()).into();
        fs::write(&path, serde_json::to_vec(&file).unwrap()).unwrap();
        assert!(matches!(ks.public("alice"), Err(Error::Malformed { .. })));
    }
}
