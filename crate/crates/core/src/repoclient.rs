//! Client workflows over a [`Store`] and a [`Ledger`]: init, commit with
//! automatic checkpoints, checkout by seq, membership changes and audit.
//!
//! A repository is a sequence of segments. Each segment starts with a
//! full encrypted snapshot (GENESIS or CHECKPOINT_GENESIS) and continues
//! with at most N encrypted patches, all sealed under one DEK. The CID of
//! the segment's snapshot blob is its segment id; patch blobs bind it as
//! associated data so they cannot be replayed into another segment.

use std::borrow::Cow;
use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;

use crate::cas::{self, Cid, Store};
use crate::chainledger::{
    self, AuditReport, CommitKind, CommitRecord, CommitRequest, Ledger, Member, Reconstruction, RepoConfig, RepoId,
    Role, RoleChange,
};
use crate::cryptbox::{self, Dek, DekFile, Identity, IdentityId, PublicIdentity, SealedBlob};
use crate::patchset;

pub const DEFAULT_CHECKPOINT_INTERVAL: u64 = 16;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ledger(#[from] chainledger::Error),
    #[error(transparent)]
    Store(#[from] cas::Error),
    #[error(transparent)]
    Crypto(#[from] cryptbox::Error),
    #[error(transparent)]
    Patch(#[from] patchset::Error),
    #[error("dek file belongs to segment {found}, expected {expected}")]
    SegmentMismatch { expected: Cid, found: Cid },
    #[error("at seq {seq}: {source}")]
    AtSeq {
        seq: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// The underlying error with any seq annotation stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtSeq { source, .. } => source.root(),
            other => other,
        }
    }

    /// The commit that triggered this error, if known.
    pub fn seq(&self) -> Option<u64> {
        match self {
            Error::AtSeq { seq, .. } => Some(*seq),
            _ => None,
        }
    }

    pub fn is_not_a_recipient(&self) -> bool {
        matches!(self.root(), Error::Crypto(cryptbox::Error::NotARecipient))
    }
}

trait AtSeq<T> {
    fn at(self, seq: u64) -> Result<T>;
}

impl<T, E: Into<Error>> AtSeq<T> for std::result::Result<T, E> {
    fn at(self, seq: u64) -> Result<T> {
        self.map_err(|e| Error::AtSeq {
            seq,
            source: Box::new(e.into()),
        })
    }
}

/// Key material and bookkeeping for the segment the head belongs to.
#[derive(Debug, Clone)]
pub struct SegmentState {
    pub start_seq: u64,
    pub segment_id: Cid,
    pub dek_file_cid: Cid,
    pub dek_file_version: u64,
    pub recipients: BTreeSet<IdentityId>,
    /// Patches committed since the segment's snapshot.
    pub patches: u64,
    dek: Dek,
}

#[derive(Debug, Clone)]
struct Working {
    head: CommitRecord,
    plain: Vec<u8>,
    segment: SegmentState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CheckoutStats {
    pub segment_start: u64,
    pub patches_applied: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    pub seq: u64,
    pub kind: CommitKind,
    pub cid: Cid,
    pub author_id: IdentityId,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GcStats {
    pub unpinned: usize,
    pub removed: usize,
}

/// A commit whose blobs are stored but which is not yet on the ledger.
#[derive(Debug)]
pub struct PreparedCommit {
    record: CommitRecord,
    plain: Vec<u8>,
    segment: SegmentState,
    new_blobs: Vec<Cid>,
}

impl PreparedCommit {
    pub fn record(&self) -> &CommitRecord {
        &self.record
    }

    /// Blobs written and pinned for this commit.
    pub fn blobs(&self) -> &[Cid] {
        &self.new_blobs
    }
}

/// One identity's view of one repository.
pub struct RepositoryHandle {
    repo_id: RepoId,
    ledger: Arc<Ledger>,
    store: Arc<Store>,
    me: Identity,
    working: Option<Working>,
}

impl std::fmt::Debug for RepositoryHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RepositoryHandle")
            .field("repo_id", &self.repo_id)
            .field("me", &self.me.id())
            .field("head", &self.working.as_ref().map(|w| w.head.seq))
            .finish_non_exhaustive()
    }
}

fn put_pinned(store: &Store, bytes: &[u8], fresh: &mut Vec<Cid>) -> Result<Cid> {
    let cid = store.put(bytes)?;
    if !store.is_pinned(&cid) {
        store.pin(&cid)?;
        fresh.push(cid);
    }
    Ok(cid)
}

fn release(store: &Store, blobs: &[Cid]) {
    for cid in blobs {
        // best effort: a leftover pin is reclaimed by the next gc
        let _ = store.unpin(cid);
    }
}

fn readers(
    roster: &std::collections::BTreeMap<IdentityId, Member>,
) -> Vec<(IdentityId, cryptbox::EncryptionPublicKey)> {
    roster
        .values()
        .filter(|m| m.role.can_read())
        .map(|m| (m.keys.id, m.keys.encryption))
        .collect()
}

/// Seals a fresh snapshot under a new DEK and writes its DEK file.
fn new_segment(
    store: &Store,
    plain: &[u8],
    roster: &std::collections::BTreeMap<IdentityId, Member>,
    start_seq: u64,
    fresh: &mut Vec<Cid>,
) -> Result<SegmentState> {
    let dek = cryptbox::generate_dek()?;
    // the snapshot's own cid is the segment id, so it cannot bind it
    let sealed = cryptbox::encrypt_blob(plain, &dek, None)?;
    let segment_id = put_pinned(store, &sealed.to_bytes(), fresh)?;
    let recipients = readers(roster);
    let dek_file = cryptbox::build_dek_file(&dek, &segment_id, &recipients, 1)?;
    let dek_file_cid = put_pinned(store, &dek_file, fresh)?;
    Ok(SegmentState {
        start_seq,
        segment_id,
        dek_file_cid,
        dek_file_version: 1,
        recipients: recipients.into_iter().map(|(id, _)| id).collect(),
        patches: 0,
        dek,
    })
}

impl RepositoryHandle {
    /// Creates a repository whose genesis commit holds `plain`. `owner` is
    /// added to `members` as OWNER unless already listed.
    ///
    /// Blobs written here are unpinned again if the ledger refuses the
    /// repository or its genesis commit.
    pub fn init(
        ledger: Arc<Ledger>,
        store: Arc<Store>,
        owner: Identity,
        members: Vec<Member>,
        checkpoint_interval: u64,
        plain: &[u8],
        timestamp: u64,
    ) -> Result<Self> {
        let mut members = members;
        if !members.iter().any(|m| m.keys.id == owner.id()) {
            members.push(Member::new(Role::Owner, *owner.public()));
        }
        let config = RepoConfig::new(checkpoint_interval, members);
        if checkpoint_interval == 0 {
            return Err(chainledger::Error::InvalidConfig("checkpoint interval must be at least 1").into());
        }
        let mut fresh = Vec::new();
        let result = (|| {
            let segment = new_segment(&store, plain, &config.roster, 0, &mut fresh)?;
            let repo_id = ledger.create_repo(owner.public(), config, timestamp)?;
            let record = CommitRecord {
                repo_id,
                seq: 0,
                kind: CommitKind::Genesis,
                cid: segment.segment_id,
                parent_cid: None,
                dek_file_cid: segment.dek_file_cid,
                author_id: owner.id(),
                timestamp,
                signature: Vec::new(),
            }
            .signed_by(&owner);
            ledger.commit_data(CommitRequest::from(&record))?;
            Ok::<_, Error>((repo_id, record, segment))
        })();
        let (repo_id, head, segment) = match result {
            Ok(v) => v,
            Err(err) => {
                release(&store, &fresh);
                return Err(err);
            }
        };
        Ok(RepositoryHandle {
            repo_id,
            ledger,
            store,
            me: owner,
            working: Some(Working {
                head,
                plain: plain.to_vec(),
                segment,
            }),
        })
    }

    /// Opens an existing repository as `me`. If `me` cannot decrypt the
    /// head, the handle still serves reads that need no key.
    pub fn open(ledger: Arc<Ledger>, store: Arc<Store>, repo_id: RepoId, me: Identity) -> Result<Self> {
        let mut handle = RepositoryHandle {
            repo_id,
            ledger,
            store,
            me,
            working: None,
        };
        handle.ledger.refresh()?;
        if handle.ledger.head(&handle.repo_id)?.is_some() {
            // an unreadable head still leaves log, verify and gc usable;
            // commit re-derives it and reports the real error
            let _ = handle.refresh();
        }
        Ok(handle)
    }

    pub fn repo_id(&self) -> RepoId {
        self.repo_id
    }

    pub fn identity(&self) -> &Identity {
        &self.me
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn head(&self) -> Result<Option<CommitRecord>> {
        Ok(self.ledger.head(&self.repo_id)?)
    }

    /// Plaintext at the head this handle last synchronized with.
    pub fn working_plaintext(&self) -> Option<&[u8]> {
        self.working.as_ref().map(|w| w.plain.as_slice())
    }

    pub fn segment(&self) -> Option<&SegmentState> {
        self.working.as_ref().map(|w| &w.segment)
    }

    /// Catches up with commits published by other clients.
    pub fn refresh(&mut self) -> Result<()> {
        self.ledger.refresh()?;
        let head = self.ledger.head(&self.repo_id)?;
        match (&self.working, head) {
            (_, None) => self.working = None,
            (Some(w), Some(h)) if w.head == h => {}
            (_, Some(h)) => match self.reconstruct(h.seq) {
                Ok((plain, segment, _)) => {
                    self.working = Some(Working {
                        head: h,
                        plain,
                        segment,
                    });
                }
                Err(err) if err.is_not_a_recipient() => self.working = None,
                Err(err) => return Err(err),
            },
        }
        Ok(())
    }

    fn working(&self) -> Result<Cow<'_, Working>> {
        if let Some(w) = &self.working {
            return Ok(Cow::Borrowed(w));
        }
        let head = self
            .ledger
            .head(&self.repo_id)?
            .ok_or(chainledger::Error::CommitNotFound)?;
        let (plain, segment, _) = self.reconstruct(head.seq)?;
        Ok(Cow::Owned(Working { head, plain, segment }))
    }

    /// Commits `plain` as the next version.
    pub fn commit(&mut self, plain: &[u8], timestamp: u64) -> Result<CommitRecord> {
        let prepared = self.prepare_commit(plain, timestamp)?;
        self.publish(prepared)
    }

    /// Encrypts and stores the blobs for the next commit without touching
    /// the ledger. Dropping the result leaves the repository at its
    /// current head.
    pub fn prepare_commit(&self, plain: &[u8], timestamp: u64) -> Result<PreparedCommit> {
        let w = self.working()?;
        let roster = self.ledger.roster(&self.repo_id)?;
        let interval = self.ledger.checkpoint_interval(&self.repo_id)?;
        let seq = w.head.seq + 1;
        if !roster.get(&self.me.id()).is_some_and(|m| m.role.can_commit()) {
            return Err(chainledger::Error::PermissionDenied.into());
        }

        let allowed: BTreeSet<IdentityId> = readers(&roster).into_iter().map(|(id, _)| id).collect();
        // a recipient who lost read access forces a fresh DEK
        let rekey = !w.segment.recipients.is_subset(&allowed);
        let mut fresh = Vec::new();
        let result = (|| {
            if w.segment.patches >= interval || rekey {
                let segment = new_segment(&self.store, plain, &roster, seq, &mut fresh)?;
                return Ok::<_, Error>((CommitKind::CheckpointGenesis, segment.segment_id, segment));
            }
            let mut segment = w.segment.clone();
            if !allowed.is_subset(&segment.recipients) {
                let version = segment.dek_file_version + 1;
                let dek_file = cryptbox::build_dek_file(&segment.dek, &segment.segment_id, &readers(&roster), version)?;
                segment.dek_file_cid = put_pinned(&self.store, &dek_file, &mut fresh)?;
                segment.dek_file_version = version;
                segment.recipients = allowed.clone();
            }
            let patch = patchset::diff(&w.plain, plain)?;
            let sealed = cryptbox::encrypt_blob(&patch.to_bytes(), &segment.dek, Some(&segment.segment_id))?;
            let cid = put_pinned(&self.store, &sealed.to_bytes(), &mut fresh)?;
            segment.patches += 1;
            Ok((CommitKind::Patch, cid, segment))
        })();
        let (kind, cid, segment) = match result {
            Ok(v) => v,
            Err(err) => {
                release(&self.store, &fresh);
                return Err(err);
            }
        };
        let record = CommitRecord {
            repo_id: self.repo_id,
            seq,
            kind,
            cid,
            parent_cid: Some(w.head.cid),
            dek_file_cid: segment.dek_file_cid,
            author_id: self.me.id(),
            timestamp,
            signature: Vec::new(),
        }
        .signed_by(&self.me);
        Ok(PreparedCommit {
            record,
            plain: plain.to_vec(),
            segment,
            new_blobs: fresh,
        })
    }

    /// Appends a prepared commit to the ledger. On `StaleParent` another
    /// client won the race: `refresh` and prepare again.
    pub fn publish(&mut self, prepared: PreparedCommit) -> Result<CommitRecord> {
        if let Err(err) = self.ledger.commit_data(CommitRequest::from(&prepared.record)) {
            release(&self.store, &prepared.new_blobs);
            return Err(err.into());
        }
        self.working = Some(Working {
            head: prepared.record.clone(),
            plain: prepared.plain,
            segment: prepared.segment,
        });
        Ok(prepared.record)
    }

    pub fn checkout(&self, seq: u64) -> Result<Vec<u8>> {
        Ok(self.checkout_with_stats(seq)?.0)
    }

    pub fn checkout_with_stats(&self, seq: u64) -> Result<(Vec<u8>, CheckoutStats)> {
        if let Some(w) = self.working.as_ref().filter(|w| w.head.seq == seq) {
            let stats = CheckoutStats {
                segment_start: w.segment.start_seq,
                patches_applied: seq - w.segment.start_seq,
            };
            if self.ledger.head(&self.repo_id)?.as_ref() == Some(&w.head) {
                return Ok((w.plain.clone(), stats));
            }
        }
        let (plain, _, stats) = self.reconstruct(seq)?;
        Ok((plain, stats))
    }

    fn fetch_sealed(&self, cid: &Cid, seq: u64) -> Result<SealedBlob> {
        let bytes = self.store.get(cid).at(seq)?;
        SealedBlob::from_bytes(&bytes).at(seq)
    }

    /// Opens the newest DEK file of the segment that lists `me`.
    fn segment_dek(&self, records: &[CommitRecord], segment_id: &Cid) -> Result<(Dek, DekFile, Cid)> {
        let mut tried = BTreeSet::new();
        for rec in records.iter().rev() {
            if !tried.insert(rec.dek_file_cid) {
                continue;
            }
            let bytes = self.store.get(&rec.dek_file_cid).at(rec.seq)?;
            let file = DekFile::parse(&bytes).at(rec.seq)?;
            if file.segment_id != *segment_id {
                return Err(Error::SegmentMismatch {
                    expected: *segment_id,
                    found: file.segment_id,
                })
                .at(rec.seq);
            }
            if !file.contains(&self.me.id()) {
                continue;
            }
            let dek = cryptbox::open_dek_file(&bytes, &self.me).at(rec.seq)?;
            return Ok((dek, file, rec.dek_file_cid));
        }
        Err(cryptbox::Error::NotARecipient.into())
    }

    fn reconstruct(&self, seq: u64) -> Result<(Vec<u8>, SegmentState, CheckoutStats)> {
        let records = self.ledger.commits(&self.repo_id)?;
        let Some(target) = usize::try_from(seq).ok().filter(|&i| i < records.len()) else {
            return Err(chainledger::Error::CommitNotFound.into());
        };
        let start = (0..=target)
            .rev()
            .find(|&i| records[i].kind.starts_segment())
            .ok_or(chainledger::Error::Corrupt("chain has no genesis".into()))?;
        let end = (target + 1..records.len())
            .find(|&i| records[i].kind.starts_segment())
            .unwrap_or(records.len());
        let segment_id = records[start].cid;
        let (dek, file, dek_file_cid) = self.segment_dek(&records[start..end], &segment_id)?;

        let genesis = &records[start];
        let sealed = self.fetch_sealed(&genesis.cid, genesis.seq)?;
        let mut plain = cryptbox::decrypt_blob(&sealed, &dek, None).at(genesis.seq)?;
        for rec in &records[start + 1..=target] {
            let sealed = self.fetch_sealed(&rec.cid, rec.seq)?;
            let bytes = cryptbox::decrypt_blob(&sealed, &dek, Some(&segment_id)).at(rec.seq)?;
            let patch = patchset::parse_patch(&bytes).at(rec.seq)?;
            plain = patchset::apply(&plain, &patch).at(rec.seq)?;
        }
        let patches = (target - start) as u64;
        let segment = SegmentState {
            start_seq: start as u64,
            segment_id,
            dek_file_cid,
            dek_file_version: file.version,
            recipients: file.recipients().copied().collect(),
            patches,
            dek,
        };
        let stats = CheckoutStats {
            segment_start: start as u64,
            patches_applied: patches,
        };
        Ok((plain, segment, stats))
    }

    /// Gives `member` a role. If that adds a new reader, the current
    /// segment's DEK file is reissued and anchored on-chain by an
    /// unchanged-content commit, which is returned.
    pub fn grant(&mut self, member: PublicIdentity, role: Role, timestamp: u64) -> Result<Option<CommitRecord>> {
        self.ledger.set_role(
            &self.repo_id,
            &self.me.id(),
            &member.id,
            RoleChange::Set { role, keys: member },
            timestamp,
        )?;
        self.refresh()?;
        let Some(w) = &self.working else {
            return Ok(None);
        };
        if !role.can_read() || w.segment.recipients.contains(&member.id) {
            return Ok(None);
        }
        if !self
            .ledger
            .role_of(&self.repo_id, &self.me.id())?
            .is_some_and(|r| r.can_commit())
        {
            // the caller handed away the right to publish the anchor
            return Ok(None);
        }
        let plain = w.plain.clone();
        self.commit(&plain, timestamp).map(Some)
    }

    /// Removes `member`. Their access ends at the next segment, which the
    /// next commit starts.
    pub fn revoke(&mut self, member: &IdentityId, timestamp: u64) -> Result<()> {
        self.ledger
            .set_role(&self.repo_id, &self.me.id(), member, RoleChange::Remove, timestamp)?;
        Ok(())
    }

    pub fn log(&self) -> Result<Vec<LogEntry>> {
        Ok(self
            .ledger
            .commits(&self.repo_id)?
            .into_iter()
            .map(|r| LogEntry {
                seq: r.seq,
                kind: r.kind,
                cid: r.cid,
                author_id: r.author_id,
                timestamp: r.timestamp,
            })
            .collect())
    }

    /// Audits the chain against the store and then tries to rebuild the
    /// head plaintext.
    pub fn verify(&self) -> Result<AuditReport> {
        let store = &self.store;
        let mut report = self
            .ledger
            .verify_chain(&self.repo_id, |cid| store.stored_digest(cid).ok().flatten())?;
        if let Some(head) = self.ledger.head(&self.repo_id)? {
            report.reconstruction = Some(match self.reconstruct(head.seq) {
                Ok((plain, _, _)) => Reconstruction::Ok {
                    seq: head.seq,
                    bytes: plain.len() as u64,
                },
                Err(err) if err.is_not_a_recipient() => Reconstruction::Skipped {
                    reason: err.root().to_string(),
                },
                Err(err) => Reconstruction::Failed {
                    seq: err.seq(),
                    error: err.root().to_string(),
                },
            });
        }
        Ok(report)
    }

    /// Drops every blob not referenced by a commit of any repository on
    /// this ledger, including pinned leftovers of abandoned commits.
    pub fn gc(&self) -> Result<GcStats> {
        gc(&self.ledger, &self.store)
    }
}

/// Blobs referenced by any commit on `ledger`.
pub fn referenced_blobs(ledger: &Ledger) -> Result<BTreeSet<Cid>> {
    let mut roots = BTreeSet::new();
    for repo in ledger.repo_ids() {
        for rec in ledger.commits(&repo)? {
            roots.insert(rec.cid);
            roots.insert(rec.dek_file_cid);
        }
    }
    Ok(roots)
}

pub fn gc(ledger: &Ledger, store: &Store) -> Result<GcStats> {
    ledger.refresh()?;
    let roots = referenced_blobs(ledger)?;
    let mut stats = GcStats::default();
    for cid in store.pinned() {
        if !roots.contains(&cid) {
            store.unpin(&cid)?;
            stats.unpinned += 1;
        }
    }
    stats.removed = store.gc(&roots)?.len();
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cryptbox::keygen;

    struct World {
        ledger: Arc<Ledger>,
        store: Arc<Store>,
        _dir: tempfile::TempDir,
    }

    fn world() -> World {
        let dir = tempfile::tempdir().unwrap();
        World {
            ledger: Arc::new(Ledger::in_memory()),
            store: Arc::new(Store::open(dir.path().join("cas")).unwrap()),
            _dir: dir,
        }
    }

    fn init(w: &World, owner: &Identity, extra: &[(Role, &Identity)], n: u64, plain: &[u8]) -> RepositoryHandle {
        let mut members = vec![Member::new(Role::Owner, *owner.public())];
        members.extend(extra.iter().map(|(r, id)| Member::new(*r, *id.public())));
        RepositoryHandle::init(
            w.ledger.clone(),
            w.store.clone(),
            clone_identity(owner),
            members,
            n,
            plain,
            1,
        )
        .unwrap()
    }

    fn clone_identity(id: &Identity) -> Identity {
        Identity::from_secret_bytes(&id.secret_bytes()).unwrap()
    }

    fn open(w: &World, repo: RepoId, me: &Identity) -> RepositoryHandle {
        RepositoryHandle::open(w.ledger.clone(), w.store.clone(), repo, clone_identity(me)).unwrap()
    }

    #[test]
    fn init_and_checkout_genesis() {
        let w = world();
        let owner = keygen(None).unwrap();
        let plain = vec![0x5a; 1024];
        let h = init(&w, &owner, &[], 3, &plain);
        let head = h.head().unwrap().unwrap();
        assert_eq!(head.seq, 0);
        assert_eq!(head.kind, CommitKind::Genesis);
        assert_eq!(h.checkout(0).unwrap(), plain);
        assert!(w.store.is_pinned(&head.cid));
        assert!(w.store.is_pinned(&head.dek_file_cid));
    }

    #[test]
    fn init_rejects_zero_interval_and_keeps_store_clean() {
        let w = world();
        let owner = keygen(None).unwrap();
        let err = RepositoryHandle::init(
            w.ledger.clone(),
            w.store.clone(),
            clone_identity(&owner),
            vec![Member::new(Role::Owner, *owner.public())],
            0,
            b"x",
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Ledger(chainledger::Error::InvalidConfig(_))));
        // owner missing from the roster: ledger refuses after blobs were written
        let other = keygen(None).unwrap();
        let err = RepositoryHandle::init(
            w.ledger.clone(),
            w.store.clone(),
            clone_identity(&owner),
            vec![Member::new(Role::Owner, *other.public())],
            2,
            b"x",
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Ledger(chainledger::Error::InvalidConfig(_))));
        assert!(w.store.pinned().is_empty());
    }

    #[test]
    fn non_member_cannot_checkout() {
        let w = world();
        let owner = keygen(None).unwrap();
        let h = init(&w, &owner, &[], 3, b"secret");
        let stranger = open(&w, h.repo_id(), &keygen(None).unwrap());
        assert!(stranger.checkout(0).unwrap_err().is_not_a_recipient());
        assert!(stranger.working_plaintext().is_none());
    }

    #[test]
    fn checkpoint_schedule() {
        let w = world();
        let owner = keygen(None).unwrap();
        let mut h = init(&w, &owner, &[], 3, b"v0");
        let kinds: Vec<_> = (1..=5u8)
            .map(|i| h.commit(&[b'v', i], 10 + i as u64).unwrap().kind)
            .collect();
        use CommitKind::*;
        assert_eq!(kinds, [Patch, Patch, Patch, CheckpointGenesis, Patch]);
        for i in 1..=5u8 {
            assert_eq!(h.checkout(i as u64).unwrap(), [b'v', i]);
        }
        let (_, stats) = h.checkout_with_stats(3).unwrap();
        assert_eq!(stats.patches_applied, 3);
        let (_, stats) = h.checkout_with_stats(5).unwrap();
        assert_eq!(
            stats,
            CheckoutStats {
                segment_start: 4,
                patches_applied: 1
            }
        );
    }

    #[test]
    fn unchanged_commit_is_identity_patch() {
        let w = world();
        let owner = keygen(None).unwrap();
        let mut h = init(&w, &owner, &[], 3, b"same");
        let rec = h.commit(b"same", 2).unwrap();
        assert_eq!(rec.kind, CommitKind::Patch);
        assert_eq!(h.checkout(1).unwrap(), b"same");
    }

    #[test]
    fn reviewer_cannot_commit_but_can_read() {
        let w = world();
        let owner = keygen(None).unwrap();
        let reviewer = keygen(None).unwrap();
        let h = init(&w, &owner, &[(Role::Reviewer, &reviewer)], 3, b"data");
        let mut r = open(&w, h.repo_id(), &reviewer);
        assert_eq!(r.checkout(0).unwrap(), b"data");
        let err = r.commit(b"mine", 2).unwrap_err();
        assert!(matches!(err, Error::Ledger(chainledger::Error::PermissionDenied)));
    }

    #[test]
    fn checkout_past_head_is_not_found() {
        let w = world();
        let owner = keygen(None).unwrap();
        let h = init(&w, &owner, &[], 3, b"data");
        assert!(matches!(
            h.checkout(1).unwrap_err(),
            Error::Ledger(chainledger::Error::CommitNotFound)
        ));
    }

    #[test]
    fn grant_reissues_dek_file() {
        let w = world();
        let owner = keygen(None).unwrap();
        let mut h = init(&w, &owner, &[], 16, b"data");
        let a = keygen(None).unwrap();
        let b = keygen(None).unwrap();
        let anchor = h.grant(*a.public(), Role::Contributor, 2).unwrap().unwrap();
        assert_eq!(anchor.kind, CommitKind::Patch);
        assert_eq!(h.segment().unwrap().dek_file_version, 2);
        h.grant(*b.public(), Role::Reviewer, 3).unwrap().unwrap();
        assert_eq!(h.segment().unwrap().dek_file_version, 3);

        let mut ha = open(&w, h.repo_id(), &a);
        // a's key also opens the older commits of the segment
        assert_eq!(ha.checkout(0).unwrap(), b"data");
        let rec = ha.commit(b"from a", 4).unwrap();
        assert_eq!(rec.seq, 3);
        h.refresh().unwrap();
        assert_eq!(h.working_plaintext().unwrap(), b"from a");

        // re-granting an existing reader needs no anchor
        assert!(h.grant(*b.public(), Role::Contributor, 5).unwrap().is_none());
    }

    #[test]
    fn grant_requires_owner() {
        let w = world();
        let owner = keygen(None).unwrap();
        let c = keygen(None).unwrap();
        let h = init(&w, &owner, &[(Role::Contributor, &c)], 4, b"d");
        let mut hc = open(&w, h.repo_id(), &c);
        let err = hc
            .grant(*keygen(None).unwrap().public(), Role::Reviewer, 2)
            .unwrap_err();
        assert!(matches!(err, Error::Ledger(chainledger::Error::PermissionDenied)));
    }

    #[test]
    fn grant_at_boundary_checkpoints() {
        let w = world();
        let owner = keygen(None).unwrap();
        let mut h = init(&w, &owner, &[], 1, b"d0");
        h.commit(b"d1", 2).unwrap();
        let a = keygen(None).unwrap();
        let anchor = h.grant(*a.public(), Role::Reviewer, 3).unwrap().unwrap();
        assert_eq!(anchor.kind, CommitKind::CheckpointGenesis);
        let ha = open(&w, h.repo_id(), &a);
        assert_eq!(ha.checkout(2).unwrap(), b"d1");
        assert!(ha.checkout(1).unwrap_err().is_not_a_recipient());
    }

    #[test]
    fn revoke_is_lazy() {
        let w = world();
        let owner = keygen(None).unwrap();
        let c = keygen(None).unwrap();
        let mut h = init(&w, &owner, &[(Role::Contributor, &c)], 16, b"old");
        h.commit(b"older", 2).unwrap();
        h.revoke(&c.id(), 3).unwrap();
        let rec = h.commit(b"new", 4).unwrap();
        assert_eq!(rec.kind, CommitKind::CheckpointGenesis);
        let hc = open(&w, h.repo_id(), &c);
        assert!(hc.checkout(rec.seq).unwrap_err().is_not_a_recipient());
        assert_eq!(hc.checkout(1).unwrap(), b"older");
        let err = h.revoke(&c.id(), 5).unwrap_err();
        assert!(matches!(err, Error::Ledger(chainledger::Error::MemberNotFound(_))));
        let err = h.revoke(&owner.id(), 5).unwrap_err();
        assert!(matches!(err, Error::Ledger(chainledger::Error::CannotOrphanRepo)));
    }

    #[test]
    fn stale_parent_then_retry() {
        let w = world();
        let owner = keygen(None).unwrap();
        let c = keygen(None).unwrap();
        let mut h1 = init(&w, &owner, &[(Role::Contributor, &c)], 16, b"base");
        let mut h2 = open(&w, h1.repo_id(), &c);
        h1.commit(b"one", 2).unwrap();
        let err = h2.commit(b"two", 3).unwrap_err();
        assert!(matches!(err, Error::Ledger(chainledger::Error::StaleParent)));
        h2.refresh().unwrap();
        assert_eq!(h2.commit(b"two", 3).unwrap().seq, 2);
        assert_eq!(h1.checkout(2).unwrap(), b"two");
    }

    #[test]
    fn abandoned_prepare_leaves_old_head_and_gc_cleans() {
        let w = world();
        let owner = keygen(None).unwrap();
        let mut h = init(&w, &owner, &[], 16, b"base");
        h.commit(b"next", 2).unwrap();
        let before = w.store.list().unwrap();
        let prepared = h.prepare_commit(b"never published", 3).unwrap();
        let orphans = prepared.blobs().to_vec();
        drop(prepared);
        assert_eq!(h.head().unwrap().unwrap().seq, 1);
        assert_eq!(h.checkout(1).unwrap(), b"next");
        assert!(h.verify().unwrap().verdict());
        let stats = h.gc().unwrap();
        assert_eq!(stats.unpinned, orphans.len());
        assert_eq!(stats.removed, orphans.len());
        assert_eq!(w.store.list().unwrap(), before);
    }

    #[test]
    fn verify_flags_corrupted_patch() {
        let w = world();
        let owner = keygen(None).unwrap();
        let mut h = init(&w, &owner, &[], 4, &[1u8; 4096]);
        for i in 2..8u8 {
            h.commit(&[i; 4096], i as u64).unwrap();
        }
        assert!(h.verify().unwrap().verdict());
        let victim = h.ledger().get_commit(&h.repo_id(), 3).unwrap();
        let path = w.store.object_path(&victim.cid);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[20] ^= 1;
        std::fs::write(&path, bytes).unwrap();
        let report = h.verify().unwrap();
        assert!(!report.verdict());
        assert_eq!(report.failing_seqs(), vec![3]);
        let err = h.checkout(4).unwrap_err();
        assert_eq!(err.seq(), Some(3));
        assert!(matches!(err.root(), Error::Store(cas::Error::IntegrityViolation(_))));
    }

    #[test]
    fn segments_do_not_share_keys() {
        let w = world();
        let owner = keygen(None).unwrap();
        let mut h = init(&w, &owner, &[], 2, b"a");
        let mut segs: std::collections::BTreeMap<u64, SegmentState> = Default::default();
        for i in 0..6u8 {
            h.commit(&[b'b', i], 2).unwrap();
            let s = h.segment().unwrap().clone();
            segs.insert(s.start_seq, s);
        }
        let records = h.ledger().commits(&h.repo_id()).unwrap();
        for rec in records.iter().filter(|r| r.kind == CommitKind::Patch) {
            let sealed = SealedBlob::from_bytes(&w.store.get(&rec.cid).unwrap()).unwrap();
            for s in segs.values() {
                let own = s.start_seq < rec.seq && rec.seq <= s.start_seq + s.patches;
                let opened = cryptbox::decrypt_blob(&sealed, &s.dek, Some(&s.segment_id)).is_ok();
                assert_eq!(opened, own, "seq {} vs segment {}", rec.seq, s.start_seq);
            }
        }
    }

    #[test]
    fn log_matches_chain() {
        let w = world();
        let owner = keygen(None).unwrap();
        let mut h = init(&w, &owner, &[], 2, b"a");
        h.commit(b"b", 5).unwrap();
        let log = h.log().unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log[1].seq, 1);
        assert_eq!(log[1].timestamp, 5);
        assert_eq!(log[1].author_id, owner.id());
    }
}
