//! The commit ledger: a local, deterministic stand-in for the repository
//! smart contract.
//!
//! Each repository owns an append-only chain of signed [`CommitRecord`]s,
//! a roster of members with roles, and an event stream. State changes go
//! through [`LedgerState`], which is pure; [`Ledger`] adds locking and
//! optional persistence:
//!
//! ```text
//! <dir>/LOCK
//! <dir>/<repo_id>/events.log    # u32 BE length ‖ canonical LedgerEvent
//! <dir>/<repo_id>/records.log   # u32 BE length ‖ canonical CommitRecord
//! ```
//!
//! The index (by seq, by cid, current roster) is rebuilt from these files
//! on open. Opening does not re-verify signatures or links; that is what
//! [`Ledger::verify_chain`] is for.

mod audit;
mod record;
mod state;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

pub use audit::{AuditReport, CommitAudit, Finding, PolicyFinding, Reconstruction};
pub use record::{
    CommitKind, CommitRecord, CommitRequest, EventKind, EventPayload, LedgerEvent, Member, RepoConfig, RepoId, Role,
    RoleChange, SIGNING_PAYLOAD_LEN,
};
pub use state::{derive_repo_id, LedgerState, RepoState};

use crate::cas::Cid;
use crate::cryptbox::{IdentityId, PublicIdentity};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("repository {0} not found")]
    RepoNotFound(RepoId),
    #[error("repository {0} already exists")]
    RepoExists(RepoId),
    #[error("commit not found")]
    CommitNotFound,
    #[error("invalid repository configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("permission denied")]
    PermissionDenied,
    #[error("parent is not the current head")]
    StaleParent,
    #[error("signature does not verify against the author's registered key")]
    BadSignature,
    #[error("checkpoint interval reached: a CHECKPOINT_GENESIS commit is required")]
    CheckpointRequired,
    #[error("malformed commit: {0}")]
    MalformedRecord(&'static str),
    #[error("the sole owner cannot be removed or demoted")]
    CannotOrphanRepo,
    #[error("member {0} not found")]
    MemberNotFound(IdentityId),
    #[error("event {0} did not reproduce on replay")]
    ReplayDiverged(u64),
    #[error("corrupt ledger data: {0}")]
    Corrupt(String),
    #[error("stored commit record {seq} is unreadable: {reason}")]
    CorruptRecord { seq: u64, reason: String },
    #[error("ledger i/o failure: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

struct Persistence {
    dir: PathBuf,
    /// Length of each repository's event log as last seen on disk.
    marks: BTreeMap<RepoId, u64>,
}

/// Thread-safe ledger handle. Writers are serialized; readers see only
/// fully applied operations.
pub struct Ledger {
    state: RwLock<LedgerState>,
    persist: Option<Mutex<Persistence>>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let dir = self
            .persist
            .as_ref()
            .map(|p| p.lock().unwrap_or_else(|e| e.into_inner()).dir.clone());
        f.debug_struct("Ledger").field("dir", &dir).finish_non_exhaustive()
    }
}

impl Ledger {
    pub fn in_memory() -> Self {
        Ledger {
            state: RwLock::new(LedgerState::default()),
            persist: None,
        }
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut persist = Persistence {
            dir,
            marks: BTreeMap::new(),
        };
        let state = {
            let _lock = lock_dir(&persist.dir)?;
            load_dir(&mut persist)?
        };
        Ok(Ledger {
            state: RwLock::new(state),
            persist: Some(Mutex::new(persist)),
        })
    }

    pub fn dir(&self) -> Option<PathBuf> {
        self.persist
            .as_ref()
            .map(|p| p.lock().unwrap_or_else(|e| e.into_inner()).dir.clone())
    }

    fn read(&self) -> RwLockReadGuard<'_, LedgerState> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, LedgerState> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs a state transition and durably appends the event it produced.
    fn mutate(&self, op: impl FnOnce(&mut LedgerState) -> Result<LedgerEvent>) -> Result<LedgerEvent> {
        let Some(persist) = &self.persist else {
            return op(&mut self.write());
        };
        let mut persist = persist.lock().unwrap_or_else(|e| e.into_inner());
        let _lock = lock_dir(&persist.dir)?;
        let mut state = self.write();
        if disk_changed(&persist)? {
            *state = load_dir(&mut persist)?;
        }
        let event = op(&mut state)?;
        let repo_id = event_repo(&state, &event);
        if let Err(err) = append_event(&mut persist, &repo_id, &event) {
            // keep memory in line with whatever reached the disk
            *state = load_dir(&mut persist)?;
            return Err(err);
        }
        Ok(event)
    }

    /// Re-reads persisted state written by other processes.
    pub fn refresh(&self) -> Result<()> {
        if let Some(persist) = &self.persist {
            let mut persist = persist.lock().unwrap_or_else(|e| e.into_inner());
            let _lock = lock_dir(&persist.dir)?;
            if disk_changed(&persist)? {
                *self.write() = load_dir(&mut persist)?;
            }
        }
        Ok(())
    }

    pub fn create_repo(&self, owner: &PublicIdentity, config: RepoConfig, timestamp: u64) -> Result<RepoId> {
        let event = self.mutate(|s| s.create_repo(owner, config, timestamp))?;
        match event.payload {
            EventPayload::RepoCreated { repo_id, .. } => Ok(repo_id),
            _ => unreachable!("create_repo emits REPO_CREATED"),
        }
    }

    pub fn commit_data(&self, req: CommitRequest) -> Result<u64> {
        let event = self.mutate(|s| s.commit_data(&req))?;
        match event.payload {
            EventPayload::Committed(rec) => Ok(rec.seq),
            _ => unreachable!("commit_data emits COMMITTED"),
        }
    }

    pub fn set_role(
        &self,
        repo_id: &RepoId,
        caller: &IdentityId,
        member: &IdentityId,
        change: RoleChange,
        timestamp: u64,
    ) -> Result<()> {
        self.mutate(|s| s.set_role(repo_id, caller, member, change, timestamp))
            .map(drop)
    }

    pub fn head(&self, repo_id: &RepoId) -> Result<Option<CommitRecord>> {
        Ok(self.read().repo(repo_id)?.head().cloned())
    }

    pub fn get_head(&self, repo_id: &RepoId) -> Result<CommitRecord> {
        self.head(repo_id)?.ok_or(Error::CommitNotFound)
    }

    pub fn get_commit(&self, repo_id: &RepoId, seq: u64) -> Result<CommitRecord> {
        let state = self.read();
        let repo = state.repo(repo_id)?;
        usize::try_from(seq)
            .ok()
            .and_then(|i| repo.records.get(i))
            .cloned()
            .ok_or(Error::CommitNotFound)
    }

    pub fn get_by_cid(&self, repo_id: &RepoId, cid: &Cid) -> Result<CommitRecord> {
        let state = self.read();
        let repo = state.repo(repo_id)?;
        let seq = repo.seq_of(cid).ok_or(Error::CommitNotFound)?;
        Ok(repo.records[seq as usize].clone())
    }

    pub fn commits(&self, repo_id: &RepoId) -> Result<Vec<CommitRecord>> {
        Ok(self.read().repo(repo_id)?.records.clone())
    }

    pub fn events(&self, repo_id: &RepoId, from_event_seq: u64) -> Result<Vec<LedgerEvent>> {
        let state = self.read();
        let repo = state.repo(repo_id)?;
        let start = usize::try_from(from_event_seq)
            .unwrap_or(usize::MAX)
            .min(repo.events.len());
        Ok(repo.events[start..].to_vec())
    }

    pub fn roster(&self, repo_id: &RepoId) -> Result<BTreeMap<IdentityId, Member>> {
        Ok(self.read().repo(repo_id)?.roster.clone())
    }

    pub fn role_of(&self, repo_id: &RepoId, id: &IdentityId) -> Result<Option<Role>> {
        Ok(self.read().repo(repo_id)?.role_of(id))
    }

    pub fn checkpoint_interval(&self, repo_id: &RepoId) -> Result<u64> {
        Ok(self.read().repo(repo_id)?.checkpoint_interval)
    }

    pub fn repo_ids(&self) -> Vec<RepoId> {
        self.read().repo_ids().copied().collect()
    }

    /// Deep copy of the whole state machine.
    pub fn snapshot(&self) -> LedgerState {
        self.read().clone()
    }

    /// Audits a repository's chain. `blob_digest` returns the SHA-256 of
    /// the blob currently stored under a cid, or `None` if it is missing.
    pub fn verify_chain(
        &self,
        repo_id: &RepoId,
        blob_digest: impl Fn(&Cid) -> Option<[u8; 32]>,
    ) -> Result<AuditReport> {
        let state = self.read();
        Ok(audit::audit(state.repo(repo_id)?, &blob_digest))
    }

    #[cfg(test)]
    pub(crate) fn tamper_record(&self, repo_id: &RepoId, seq: u64, f: impl FnOnce(&mut CommitRecord)) {
        let mut state = self.write();
        let repo = state.repo_mut_for_test(repo_id);
        f(&mut repo.records[seq as usize]);
        repo.reindex();
    }
}

fn event_repo(state: &LedgerState, event: &LedgerEvent) -> RepoId {
    match &event.payload {
        EventPayload::RepoCreated { repo_id, .. } => *repo_id,
        EventPayload::Committed(rec) => rec.repo_id,
        EventPayload::RoleSet { .. } => *state
            .repos
            .iter()
            .find(|(_, r)| r.events.last() == Some(event))
            .map(|(id, _)| id)
            .expect("role event was just appended to its repo"),
    }
}

fn lock_dir(dir: &Path) -> Result<File> {
    let file = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(dir.join("LOCK"))?;
    file.lock()?;
    Ok(file)
}

fn repo_dirs(dir: &Path) -> Result<Vec<(RepoId, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        if let Some(id) = entry.file_name().to_str().and_then(|n| n.parse::<RepoId>().ok()) {
            out.push((id, entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn disk_changed(persist: &Persistence) -> Result<bool> {
    let dirs = repo_dirs(&persist.dir)?;
    if dirs.len() != persist.marks.len() {
        return Ok(true);
    }
    for (id, path) in dirs {
        let len = fs::metadata(path.join("events.log")).map_or(0, |m| m.len());
        if persist.marks.get(&id) != Some(&len) {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Reads length-prefixed frames. A torn final frame is cut off.
fn read_frames(path: &Path) -> Result<Vec<(u64, Vec<u8>)>> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut frames = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            break;
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        if bytes.len() - pos - 4 < len {
            break;
        }
        frames.push((pos as u64, bytes[pos + 4..pos + 4 + len].to_vec()));
        pos += 4 + len;
    }
    if pos < bytes.len() {
        OpenOptions::new().write(true).open(path)?.set_len(pos as u64)?;
    }
    Ok(frames)
}

fn append_frames(path: &Path, frames: &[Vec<u8>]) -> Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut buf = Vec::new();
    for frame in frames {
        buf.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        buf.extend_from_slice(frame);
    }
    file.write_all(&buf)?;
    file.sync_data()?;
    Ok(())
}

fn load_dir(persist: &mut Persistence) -> Result<LedgerState> {
    let mut state = LedgerState::default();
    persist.marks.clear();
    for (id, path) in repo_dirs(&persist.dir)? {
        let events_path = path.join("events.log");
        let records_path = path.join("records.log");
        let events = read_frames(&events_path)?
            .into_iter()
            .map(|(_, f)| LedgerEvent::parse(&f))
            .collect::<Result<Vec<_>>>()?;
        if events.is_empty() {
            // creation never completed
            continue;
        }
        let committed: Vec<&CommitRecord> = events
            .iter()
            .filter_map(|e| match &e.payload {
                EventPayload::Committed(r) => Some(r),
                _ => None,
            })
            .collect();

        let frames = read_frames(&records_path)?;
        if frames.len() > committed.len() {
            // record written for an event that never landed
            let cut = frames[committed.len()].0;
            OpenOptions::new().write(true).open(&records_path)?.set_len(cut)?;
        }
        let mut records = frames
            .into_iter()
            .take(committed.len())
            .enumerate()
            .map(|(seq, (_, f))| {
                CommitRecord::parse(&f).map_err(|e| Error::CorruptRecord {
                    seq: seq as u64,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if records.len() < committed.len() {
            let missing: Vec<CommitRecord> = committed[records.len()..].iter().map(|r| (*r).clone()).collect();
            append_frames(
                &records_path,
                &missing.iter().map(CommitRecord::to_bytes).collect::<Vec<_>>(),
            )?;
            records.extend(missing);
        }

        let loaded = state.load_trusted(events, records)?;
        if loaded != id {
            return Err(Error::Corrupt(format!("directory {id} holds repository {loaded}")));
        }
        persist.marks.insert(id, fs::metadata(&events_path)?.len());
    }
    Ok(state)
}

fn append_event(persist: &mut Persistence, repo_id: &RepoId, event: &LedgerEvent) -> Result<()> {
    let dir = persist.dir.join(repo_id.to_hex());
    fs::create_dir_all(&dir)?;
    let events_path = dir.join("events.log");
    append_frames(&events_path, &[event.to_bytes()])?;
    if let EventPayload::Committed(rec) = &event.payload {
        append_frames(&dir.join("records.log"), &[rec.to_bytes()])?;
    }
    persist.marks.insert(*repo_id, fs::metadata(&events_path)?.len());
    Ok(())
}
