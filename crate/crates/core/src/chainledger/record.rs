//! Ledger value types and their canonical byte encodings.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cas::Cid;
use crate::cryptbox::{self, hex_id, EncryptionPublicKey, Identity, IdentityId, PublicIdentity, SigningPublicKey};
use crate::wire::Reader;

use super::{Error, Result};

const RECORD_MAGIC: &[u8; 5] = b"EDGC1";

/// Length of the signed part of a [`CommitRecord`].
pub const SIGNING_PAYLOAD_LEN: usize = 5 + 32 + 8 + 1 + 32 + 32 + 32 + 32 + 8;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RepoId([u8; 32]);
hex_id!(RepoId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CommitKind {
    Genesis,
    Patch,
    CheckpointGenesis,
}

impl CommitKind {
    pub fn code(self) -> u8 {
        match self {
            CommitKind::Genesis => 0,
            CommitKind::Patch => 1,
            CommitKind::CheckpointGenesis => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(CommitKind::Genesis),
            1 => Some(CommitKind::Patch),
            2 => Some(CommitKind::CheckpointGenesis),
            _ => None,
        }
    }

    /// Whether this commit starts a new segment.
    pub fn starts_segment(self) -> bool {
        !matches!(self, CommitKind::Patch)
    }
}

impl fmt::Display for CommitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            CommitKind::Genesis => "GENESIS",
            CommitKind::Patch => "PATCH",
            CommitKind::CheckpointGenesis => "CHECKPOINT_GENESIS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    Owner,
    Contributor,
    Reviewer,
}

impl Role {
    pub fn code(self) -> u8 {
        match self {
            Role::Owner => 0,
            Role::Contributor => 1,
            Role::Reviewer => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Role::Owner),
            1 => Some(Role::Contributor),
            2 => Some(Role::Reviewer),
            _ => None,
        }
    }

    pub fn can_commit(self) -> bool {
        matches!(self, Role::Owner | Role::Contributor)
    }

    /// Every role receives the segment key; reviewers are read-only.
    pub fn can_read(self) -> bool {
        true
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Role::Owner => "owner",
            Role::Contributor => "contributor",
            Role::Reviewer => "reviewer",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "owner" => Ok(Role::Owner),
            "contributor" => Ok(Role::Contributor),
            "reviewer" => Ok(Role::Reviewer),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// A roster entry: role plus the member's public keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Member {
    pub role: Role,
    pub keys: PublicIdentity,
}

impl Member {
    pub fn new(role: Role, keys: PublicIdentity) -> Self {
        Member { role, keys }
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(self.keys.id.as_bytes());
        out.push(self.role.code());
        encode_keys(&self.keys, out);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let id = IdentityId::from_bytes(r.array().map_err(truncated)?);
        let role = Role::from_code(r.u8().map_err(truncated)?).ok_or(Error::Corrupt("role code".into()))?;
        let keys = decode_keys(r)?;
        if keys.id != id {
            return Err(Error::Corrupt("member id does not match its key".into()));
        }
        Ok(Member { role, keys })
    }
}

fn encode_keys(keys: &PublicIdentity, out: &mut Vec<u8>) {
    out.extend_from_slice(&keys.signing.to_sec1());
    out.extend_from_slice(&keys.encryption.to_sec1());
}

fn decode_keys(r: &mut Reader<'_>) -> Result<PublicIdentity> {
    let signing = SigningPublicKey::from_sec1(r.take(33).map_err(truncated)?)
        .map_err(|_| Error::Corrupt("signing key".into()))?;
    let encryption = EncryptionPublicKey::from_sec1(r.take(33).map_err(truncated)?)
        .map_err(|_| Error::Corrupt("encryption key".into()))?;
    Ok(PublicIdentity::new(signing, encryption))
}

fn truncated(_: crate::wire::Truncated) -> Error {
    Error::Corrupt("truncated".into())
}

/// Checkpoint interval and initial roster of a repository.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepoConfig {
    pub checkpoint_interval: u64,
    pub roster: BTreeMap<IdentityId, Member>,
}

impl RepoConfig {
    pub fn new(checkpoint_interval: u64, members: impl IntoIterator<Item = Member>) -> Self {
        RepoConfig {
            checkpoint_interval,
            roster: members.into_iter().map(|m| (m.keys.id, m)).collect(),
        }
    }

    pub fn owners(&self) -> impl Iterator<Item = &IdentityId> {
        self.roster
            .iter()
            .filter(|(_, m)| m.role == Role::Owner)
            .map(|(id, _)| id)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.roster.len() * 99);
        out.extend_from_slice(&self.checkpoint_interval.to_be_bytes());
        out.extend_from_slice(&(self.roster.len() as u32).to_be_bytes());
        for member in self.roster.values() {
            member.encode(&mut out);
        }
        out
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes()).into()
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let checkpoint_interval = r.u64().map_err(truncated)?;
        let count = r.u32().map_err(truncated)?;
        let mut roster = BTreeMap::new();
        for _ in 0..count {
            let m = Member::decode(r)?;
            roster.insert(m.keys.id, m);
        }
        Ok(RepoConfig {
            checkpoint_interval,
            roster,
        })
    }
}

/// One entry of a repository's commit chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub repo_id: RepoId,
    pub seq: u64,
    pub kind: CommitKind,
    pub cid: Cid,
    pub parent_cid: Option<Cid>,
    pub dek_file_cid: Cid,
    pub author_id: IdentityId,
    pub timestamp: u64,
    pub signature: Vec<u8>,
}

impl CommitRecord {
    /// The exact bytes covered by the signature:
    /// `"EDGC1" ‖ repo_id ‖ seq ‖ kind ‖ cid ‖ parent_cid ‖ dek_file_cid ‖
    /// author_id ‖ timestamp`, with an absent parent encoded as zeros.
    pub fn signing_payload(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(SIGNING_PAYLOAD_LEN);
        out.extend_from_slice(RECORD_MAGIC);
        out.extend_from_slice(self.repo_id.as_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.push(self.kind.code());
        out.extend_from_slice(self.cid.digest());
        out.extend_from_slice(self.parent_cid.as_ref().map_or(&[0u8; 32], |c| c.digest()));
        out.extend_from_slice(self.dek_file_cid.digest());
        out.extend_from_slice(self.author_id.as_bytes());
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out
    }

    /// Replaces the signature with one by `author`.
    pub fn signed_by(mut self, author: &Identity) -> Self {
        self.signature = cryptbox::sign(&self.signing_payload(), author);
        self
    }

    pub fn verify_signature(&self, key: &SigningPublicKey) -> bool {
        cryptbox::verify_sig(&self.signing_payload(), &self.signature, key)
    }

    /// Signing payload followed by `sig_len(u32 BE) ‖ signature`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.signing_payload();
        out.extend_from_slice(&(self.signature.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.signature);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let rec = Self::decode(&mut r)?;
        if !r.is_empty() {
            return Err(Error::Corrupt("trailing bytes after record".into()));
        }
        Ok(rec)
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self> {
        if r.take(5).map_err(truncated)? != RECORD_MAGIC {
            return Err(Error::Corrupt("bad record magic".into()));
        }
        let repo_id = RepoId::from_bytes(r.array().map_err(truncated)?);
        let seq = r.u64().map_err(truncated)?;
        let kind = CommitKind::from_code(r.u8().map_err(truncated)?)
            .ok_or_else(|| Error::Corrupt("commit kind code".into()))?;
        let cid = Cid::from_digest(r.array().map_err(truncated)?);
        let parent: [u8; 32] = r.array().map_err(truncated)?;
        let parent_cid = (parent != [0u8; 32]).then(|| Cid::from_digest(parent));
        let dek_file_cid = Cid::from_digest(r.array().map_err(truncated)?);
        let author_id = IdentityId::from_bytes(r.array().map_err(truncated)?);
        let timestamp = r.u64().map_err(truncated)?;
        let sig_len = r.u32().map_err(truncated)? as usize;
        let signature = r.take(sig_len).map_err(truncated)?.to_vec();
        Ok(CommitRecord {
            repo_id,
            seq,
            kind,
            cid,
            parent_cid,
            dek_file_cid,
            author_id,
            timestamp,
            signature,
        })
    }
}

/// What a caller submits to publish a commit. The ledger assigns `seq`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRequest {
    pub repo_id: RepoId,
    pub caller_id: IdentityId,
    pub cid: Cid,
    pub parent_cid: Option<Cid>,
    pub dek_file_cid: Cid,
    pub kind: CommitKind,
    pub timestamp: u64,
    pub signature: Vec<u8>,
}

impl From<&CommitRecord> for CommitRequest {
    fn from(rec: &CommitRecord) -> Self {
        CommitRequest {
            repo_id: rec.repo_id,
            caller_id: rec.author_id,
            cid: rec.cid,
            parent_cid: rec.parent_cid,
            dek_file_cid: rec.dek_file_cid,
            kind: rec.kind,
            timestamp: rec.timestamp,
            signature: rec.signature.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)] // kept Copy; events are rare
pub enum RoleChange {
    Set { role: Role, keys: PublicIdentity },
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    RepoCreated,
    RoleSet,
    Committed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventPayload {
    RepoCreated {
        repo_id: RepoId,
        owner: IdentityId,
        config: RepoConfig,
    },
    RoleSet {
        caller: IdentityId,
        member: IdentityId,
        change: RoleChange,
    },
    Committed(CommitRecord),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEvent {
    pub event_seq: u64,
    pub timestamp: u64,
    pub payload: EventPayload,
}

impl LedgerEvent {
    pub fn kind(&self) -> EventKind {
        match self.payload {
            EventPayload::RepoCreated { .. } => EventKind::RepoCreated,
            EventPayload::RoleSet { .. } => EventKind::RoleSet,
            EventPayload::Committed(_) => EventKind::Committed,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.event_seq.to_be_bytes());
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        match &self.payload {
            EventPayload::RepoCreated { repo_id, owner, config } => {
                out.push(0);
                out.extend_from_slice(repo_id.as_bytes());
                out.extend_from_slice(owner.as_bytes());
                out.extend_from_slice(&config.canonical_bytes());
            }
            EventPayload::RoleSet { caller, member, change } => {
                out.push(1);
                out.extend_from_slice(caller.as_bytes());
                out.extend_from_slice(member.as_bytes());
                match change {
                    RoleChange::Remove => out.push(0),
                    RoleChange::Set { role, keys } => {
                        out.push(1);
                        out.push(role.code());
                        encode_keys(keys, &mut out);
                    }
                }
            }
            EventPayload::Committed(rec) => {
                out.push(2);
                out.extend_from_slice(&rec.to_bytes());
            }
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let event_seq = r.u64().map_err(truncated)?;
        let timestamp = r.u64().map_err(truncated)?;
        let payload = match r.u8().map_err(truncated)? {
            0 => EventPayload::RepoCreated {
                repo_id: RepoId::from_bytes(r.array().map_err(truncated)?),
                owner: IdentityId::from_bytes(r.array().map_err(truncated)?),
                config: RepoConfig::decode(&mut r)?,
            },
            1 => {
                let caller = IdentityId::from_bytes(r.array().map_err(truncated)?);
                let member = IdentityId::from_bytes(r.array().map_err(truncated)?);
                let change = match r.u8().map_err(truncated)? {
                    0 => RoleChange::Remove,
                    1 => {
                        let role = Role::from_code(r.u8().map_err(truncated)?)
                            .ok_or_else(|| Error::Corrupt("role code".into()))?;
                        RoleChange::Set {
                            role,
                            keys: decode_keys(&mut r)?,
                        }
                    }
                    _ => return Err(Error::Corrupt("role change tag".into())),
                };
                EventPayload::RoleSet { caller, member, change }
            }
            2 => EventPayload::Committed(CommitRecord::decode(&mut r)?),
            _ => return Err(Error::Corrupt("event kind code".into())),
        };
        if !r.is_empty() {
            return Err(Error::Corrupt("trailing bytes after event".into()));
        }
        Ok(LedgerEvent {
            event_seq,
            timestamp,
            payload,
        })
    }
}
