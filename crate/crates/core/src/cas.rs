//! Content-addressed blob store.
//!
//! Blobs are addressed by the SHA-256 digest of their exact bytes and kept
//! on disk as:
//!
//! ```text
//! <root>/
//! ├── objects/<hex[0:2]>/<hex>   # one immutable file per blob
//! ├── pins                       # sorted, LF-terminated hex cids
//! ├── pins.log                   # `+<hex>` / `-<hex>` changes since then
//! ├── pins.lock                  # held while either pin file changes
//! └── tmp/                       # staging area for atomic writes
//! ```
//!
//! Pin changes are appended to `pins.log` and folded into `pins` once the
//! log outgrows the set, and on every `gc`.
//!
//! Every write goes through a temporary file followed by a rename, so a
//! crash never leaves a half-written object under its final name. Reads
//! re-hash the stored bytes and refuse to return anything that no longer
//! matches its identifier.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;
use std::time::UNIX_EPOCH;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

/// 32-byte SHA-256 content identifier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cid([u8; 32]);

impl Cid {
    /// Identifier of `bytes`.
    pub fn of(bytes: &[u8]) -> Self {
        Cid(Sha256::digest(bytes).into())
    }

    pub const fn from_digest(digest: [u8; 32]) -> Self {
        Cid(digest)
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cid({})", &self.to_hex()[..12])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid cid text: expected 64 lowercase hex characters")]
pub struct ParseCidError;

impl FromStr for Cid {
    type Err = ParseCidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(ParseCidError);
        }
        let mut digest = [0u8; 32];
        hex::decode_to_slice(s, &mut digest).map_err(|_| ParseCidError)?;
        Ok(Cid(digest))
    }
}

impl Serialize for Cid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Cid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("blob {0} not found")]
    NotFound(Cid),
    #[error("blob {0} failed its integrity check")]
    IntegrityViolation(Cid),
    #[error("storage full")]
    StorageFull,
    #[error("store i/o failure: {0}")]
    IoFailure(#[source] io::Error),
    #[error("malformed pin set: {0}")]
    CorruptPinSet(String),
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        if err.kind() == io::ErrorKind::StorageFull {
            Error::StorageFull
        } else {
            Error::IoFailure(err)
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Metadata and contents of one stored blob.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredBlob {
    pub cid: Cid,
    pub bytes: Vec<u8>,
    pub pinned: bool,
    pub created_at: u64,
}

/// A content-addressed store rooted at a directory.
///
/// Reads run concurrently; `put`, `pin`, `unpin` and `gc` are serialized
/// against each other and against reads by an internal lock.
pub struct Store {
    root: PathBuf,
    pins: RwLock<BTreeSet<Cid>>,
    journal_entries: AtomicU64,
}

// Shared by every handle in the process so two stores on one root never
// pick the same staging name.
static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

const MIN_COMPACT_ENTRIES: u64 = 1024;

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish()
    }
}

impl Store {
    /// Opens the store at `root`, creating the layout if it is missing.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("objects"))?;
        fs::create_dir_all(root.join("tmp"))?;
        let mut pins = read_pins(&root.join("pins"))?;
        let entries = replay_pin_log(&root.join("pins.log"), &mut pins)?;
        Ok(Store {
            root,
            pins: RwLock::new(pins),
            journal_entries: AtomicU64::new(entries),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of the object file backing `cid`, whether or not it exists.
    pub fn object_path(&self, cid: &Cid) -> PathBuf {
        let hex = cid.to_hex();
        self.root.join("objects").join(&hex[..2]).join(hex)
    }

    pub fn put(&self, bytes: &[u8]) -> Result<Cid> {
        let cid = Cid::of(bytes);
        let _guard = self.pins.write().unwrap_or_else(|e| e.into_inner());
        let path = self.object_path(&cid);
        match fs::read(&path) {
            Ok(existing) if existing == bytes => return Ok(cid),
            // A stale or corrupted copy is replaced with the correct bytes.
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        fs::create_dir_all(path.parent().expect("object path has a shard dir"))?;
        self.write_atomic(&path, bytes)?;
        Ok(cid)
    }

    pub fn get(&self, cid: &Cid) -> Result<Vec<u8>> {
        let _guard = self.pins.read().unwrap_or_else(|e| e.into_inner());
        let bytes = self.read_object(cid)?;
        if Cid::of(&bytes) != *cid {
            return Err(Error::IntegrityViolation(*cid));
        }
        Ok(bytes)
    }

    /// Full record for `cid`, integrity-checked like [`Store::get`].
    pub fn stat(&self, cid: &Cid) -> Result<StoredBlob> {
        let bytes = self.get(cid)?;
        let meta = fs::metadata(self.object_path(cid))?;
        let created_at = meta
            .modified()
            .ok()
            .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
            .map_or(0, |d| d.as_secs());
        Ok(StoredBlob {
            cid: *cid,
            bytes,
            pinned: self.is_pinned(cid),
            created_at,
        })
    }

    /// SHA-256 of whatever is currently stored under `cid`, without judging
    /// it. `None` when no object exists. Audits use this to tell missing
    /// blobs from altered ones.
    pub fn stored_digest(&self, cid: &Cid) -> Result<Option<[u8; 32]>> {
        let _guard = self.pins.read().unwrap_or_else(|e| e.into_inner());
        match self.read_object(cid) {
            Ok(bytes) => Ok(Some(Sha256::digest(&bytes).into())),
            Err(Error::NotFound(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn contains(&self, cid: &Cid) -> bool {
        self.object_path(cid).is_file()
    }

    pub fn is_pinned(&self, cid: &Cid) -> bool {
        self.pins.read().unwrap_or_else(|e| e.into_inner()).contains(cid)
    }

    pub fn pinned(&self) -> BTreeSet<Cid> {
        self.pins.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn pin(&self, cid: &Cid) -> Result<()> {
        self.update_pins(cid, true)
    }

    pub fn unpin(&self, cid: &Cid) -> Result<()> {
        self.update_pins(cid, false)
    }

    /// Every cid with an object file, in ascending order.
    pub fn list(&self) -> Result<BTreeSet<Cid>> {
        let mut out = BTreeSet::new();
        let objects = self.root.join("objects");
        for shard in fs::read_dir(&objects)? {
            let shard = shard?;
            if !shard.file_type()?.is_dir() {
                continue;
            }
            for entry in fs::read_dir(shard.path())? {
                let entry = entry?;
                if let Some(cid) = entry.file_name().to_str().and_then(|n| n.parse().ok()) {
                    out.insert(cid);
                }
            }
        }
        Ok(out)
    }

    /// Total bytes held in object files.
    pub fn total_bytes(&self) -> Result<u64> {
        let mut total = 0;
        for cid in self.list()? {
            total += fs::metadata(self.object_path(&cid))?.len();
        }
        Ok(total)
    }

    /// Removes every blob that is neither pinned nor in `roots`.
    ///
    /// Victims are first moved into a private trash directory; if any move
    /// fails the earlier moves are undone and nothing is removed.
    pub fn gc(&self, roots: &BTreeSet<Cid>) -> Result<BTreeSet<Cid>> {
        let mut pins = self.pins.write().unwrap_or_else(|e| e.into_inner());
        let _lock = self.lock_pins()?;
        self.compact_pins(&mut pins)?;
        let victims: Vec<Cid> = self
            .list()?
            .into_iter()
            .filter(|cid| !pins.contains(cid) && !roots.contains(cid))
            .collect();
        if victims.is_empty() {
            return Ok(BTreeSet::new());
        }

        let trash = self.root.join("tmp").join(format!("gc-{}", self.next_tmp_id()));
        fs::create_dir_all(&trash)?;
        let mut moved: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(victims.len());
        for cid in &victims {
            let from = self.object_path(cid);
            let to = trash.join(cid.to_hex());
            if let Err(err) = fs::rename(&from, &to) {
                for (orig, staged) in moved.iter().rev() {
                    let _ = fs::rename(staged, orig);
                }
                let _ = fs::remove_dir_all(&trash);
                return Err(err.into());
            }
            moved.push((from, to));
        }
        // Objects are already unreachable; failure here only leaks space.
        let _ = fs::remove_dir_all(&trash);
        Ok(victims.into_iter().collect())
    }

    fn read_object(&self, cid: &Cid) -> Result<Vec<u8>> {
        match fs::read(self.object_path(cid)) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(Error::NotFound(*cid)),
            Err(e) => Err(e.into()),
        }
    }

    /// Appends the change without consulting the in-memory set, which may
    /// be stale if another handle shares the root; replay is idempotent.
    fn update_pins(&self, cid: &Cid, pinned: bool) -> Result<()> {
        let mut pins = self.pins.write().unwrap_or_else(|e| e.into_inner());
        let _lock = self.lock_pins()?;
        if !self.object_path(cid).is_file() {
            return Err(Error::NotFound(*cid));
        }
        let line = format!("{}{cid}\n", if pinned { '+' } else { '-' });
        let mut log = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("pins.log"))?;
        log.write_all(line.as_bytes())?;
        log.sync_data()?;
        if pinned {
            pins.insert(*cid);
        } else {
            pins.remove(cid);
        }
        let entries = self.journal_entries.fetch_add(1, Ordering::Relaxed) + 1;
        if entries > MIN_COMPACT_ENTRIES.max(pins.len() as u64) {
            self.compact_pins(&mut pins)?;
        }
        Ok(())
    }

    /// Serializes pin-file writers across handles and processes.
    fn lock_pins(&self) -> Result<fs::File> {
        let file = fs::OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(self.root.join("pins.lock"))?;
        file.lock()?;
        Ok(file)
    }

    /// Folds the on-disk log into `pins` and clears it, refreshing `set`
    /// with changes made by other handles. Replaying a log over a newer
    /// snapshot is harmless, so a crash between the two steps loses
    /// nothing. The caller holds the pin lock.
    fn compact_pins(&self, set: &mut BTreeSet<Cid>) -> Result<()> {
        let mut fresh = read_pins(&self.root.join("pins"))?;
        replay_pin_log(&self.root.join("pins.log"), &mut fresh)?;
        let mut text = String::with_capacity(fresh.len() * 65);
        for c in &fresh {
            text.push_str(&c.to_hex());
            text.push('\n');
        }
        self.write_atomic(&self.root.join("pins"), text.as_bytes())?;
        match fs::remove_file(self.root.join("pins.log")) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        self.journal_entries.store(0, Ordering::Relaxed);
        *set = fresh;
        Ok(())
    }

    fn next_tmp_id(&self) -> String {
        format!("{}-{}", std::process::id(), TMP_COUNTER.fetch_add(1, Ordering::Relaxed))
    }

    fn write_atomic(&self, dest: &Path, bytes: &[u8]) -> Result<()> {
        let tmp = self.root.join("tmp").join(self.next_tmp_id());
        let result = (|| -> io::Result<()> {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(bytes)?;
            file.sync_all()?;
            fs::rename(&tmp, dest)
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result.map_err(Error::from)
    }
}

/// Applies `pins.log` to `pins`. A torn final line is ignored.
fn replay_pin_log(path: &Path, pins: &mut BTreeSet<Cid>) -> Result<u64> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(0),
        Err(e) if e.kind() == io::ErrorKind::InvalidData => return Err(Error::CorruptPinSet("pins.log".into())),
        Err(e) => return Err(e.into()),
    };
    let complete = text.rfind('\n').map_or("", |end| &text[..end]);
    let mut entries = 0;
    for line in complete.lines() {
        let (op, hex) = line.split_at(line.len().min(1));
        let cid: Cid = hex.parse().map_err(|_| Error::CorruptPinSet(line.to_owned()))?;
        match op {
            "+" => pins.insert(cid),
            "-" => pins.remove(&cid),
            _ => return Err(Error::CorruptPinSet(line.to_owned())),
        };
        entries += 1;
    }
    Ok(entries)
}

fn read_pins(path: &Path) -> Result<BTreeSet<Cid>> {
    let text = match fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(BTreeSet::new()),
        Err(e) => return Err(e.into()),
    };
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.parse().map_err(|_| Error::CorruptPinSet(l.to_owned())))
        .collect()
}
