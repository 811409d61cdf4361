//! Acceptance gate. Each test prints one `criterion N: PASS|FAIL` line with
//! the measured numbers, then asserts.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgchain_vault::cas::{Cid, Store};
use edgchain_vault::chainledger::{
    self, CommitKind, CommitRecord, CommitRequest, Ledger, LedgerState, Member, RepoId, Role,
};
use edgchain_vault::cryptbox::{self, Dek, Identity};
use edgchain_vault::repoclient::{self, RepositoryHandle};

// Tolerances.
const C1_HISTORIES: usize = 200;
const C1_MAX_COMMITS: usize = 50;
const C1_MAX_PAYLOAD: usize = 256 * 1024;
const C1_INTERVALS: [u64; 3] = [1, 3, 16];
const C1_TIME_LIMIT: Duration = Duration::from_secs(60);
const C2_COMMITS: usize = 10;
const C3_WINDOW: usize = 16;
const C5_BASE: usize = 1 << 20;
const C5_COMMITS: usize = 100;
const C5_EDIT: usize = 1024;
const C5_MAX_RATIO: f64 = 0.35;
const C5_TIME_LIMIT: Duration = Duration::from_secs(30);
const C6_ATTEMPTS: usize = 1000;
const C7_ROSTER_TRIALS: usize = 60;

/// Written straight to stderr so the line survives libtest's capture.
fn report(n: u32, pass: bool, detail: impl std::fmt::Display) {
    use std::io::Write;
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn ident(seed: u64) -> Identity {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_be_bytes());
    bytes[8..].copy_from_slice(b"acceptance-identity-seed");
    cryptbox::keygen(Some(&bytes)).unwrap()
}

fn random_bytes(rng: &mut impl RngCore, n: usize) -> Vec<u8> {
    let mut v = vec![0u8; n];
    rng.fill_bytes(&mut v);
    v
}

/// A random edit of `cur`, capped at `max` bytes.
fn mutate(rng: &mut ChaCha8Rng, cur: &[u8], max: usize) -> Vec<u8> {
    if rng.gen_bool(0.04) {
        return cur.to_vec();
    }
    if rng.gen_bool(0.03) {
        let n = rng.gen_range(0..=max);
        return random_bytes(rng, n);
    }
    let mut v = cur.to_vec();
    for _ in 0..rng.gen_range(1..=4) {
        let len = v.len();
        match rng.gen_range(0..6) {
            0 if len > 0 => {
                let s = rng.gen_range(0..len);
                let e = rng.gen_range(s..=len.min(s + 4096));
                rng.fill_bytes(&mut v[s..e]);
            }
            1 => {
                let at = rng.gen_range(0..=len);
                let n = rng.gen_range(1..=4096);
                let ins = random_bytes(rng, n);
                v.splice(at..at, ins);
            }
            2 if len > 0 => {
                let s = rng.gen_range(0..len);
                let e = rng.gen_range(s..=len.min(s + 8192));
                v.drain(s..e);
            }
            3 => {
                let n = rng.gen_range(1..=2048);
                v.extend(random_bytes(rng, n));
            }
            4 if len > 0 => {
                let keep = rng.gen_range(len / 2..=len);
                v.truncate(keep);
            }
            5 if len > 0 => {
                let s = rng.gen_range(0..len);
                let e = rng.gen_range(s..=len.min(s + 4096));
                let copy = v[s..e].to_vec();
                let at = rng.gen_range(0..=len);
                v.splice(at..at, copy);
            }
            _ => {}
        }
    }
    v.truncate(max);
    v
}

struct HistoryRun {
    elapsed: Duration,
    histories: usize,
    checkouts: usize,
    mismatches: Vec<String>,
    /// (history, seq, patches applied, N) where patches exceeded N.
    bound_violations: Vec<(usize, u64, u64, u64)>,
    schedule_violations: Vec<(usize, u64, CommitKind)>,
    max_patches: BTreeMap<u64, u64>,
    boundary_rejections: usize,
    boundary_failures: Vec<String>,
}

fn histories() -> &'static HistoryRun {
    static RUN: OnceLock<HistoryRun> = OnceLock::new();
    RUN.get_or_init(run_histories)
}

fn run_histories() -> HistoryRun {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    let mut run = HistoryRun {
        elapsed: Duration::ZERO,
        histories: 0,
        checkouts: 0,
        mismatches: Vec::new(),
        bound_violations: Vec::new(),
        schedule_violations: Vec::new(),
        max_patches: BTreeMap::new(),
        boundary_rejections: 0,
        boundary_failures: Vec::new(),
    };
    let started = Instant::now();
    for h in 0..C1_HISTORIES {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc1_0000 + h as u64);
        let n = C1_INTERVALS[h % C1_INTERVALS.len()];
        let owner = ident(h as u64);
        let ledger = Arc::new(Ledger::in_memory());
        let size = if rng.gen_bool(0.2) {
            rng.gen_range(0..512)
        } else {
            rng.gen_range(0..=C1_MAX_PAYLOAD)
        };
        let mut oracle = vec![random_bytes(&mut rng, size)];
        let mut handle = RepositoryHandle::init(
            ledger.clone(),
            store.clone(),
            ident(h as u64),
            vec![Member::new(Role::Owner, *owner.public())],
            n,
            &oracle[0],
            1,
        )
        .unwrap();
        let commits = rng.gen_range(1..=C1_MAX_COMMITS);
        for seq in 1..commits {
            let next = mutate(&mut rng, oracle.last().unwrap(), C1_MAX_PAYLOAD);
            let rec = handle.commit(&next, 1 + seq as u64).unwrap();
            let expect_checkpoint = (seq as u64).is_multiple_of(n + 1);
            if (rec.kind == CommitKind::CheckpointGenesis) != expect_checkpoint {
                run.schedule_violations.push((h, rec.seq, rec.kind));
            }
            oracle.push(next);
        }

        // fresh handle so nothing comes from the writer's cache
        let reader = RepositoryHandle::open(ledger.clone(), store.clone(), handle.repo_id(), ident(h as u64)).unwrap();
        for (seq, want) in oracle.iter().enumerate() {
            let (got, stats) = reader.checkout_with_stats(seq as u64).unwrap();
            run.checkouts += 1;
            if &got != want {
                run.mismatches.push(format!("history {h} seq {seq}"));
            }
            let m = run.max_patches.entry(n).or_default();
            *m = (*m).max(stats.patches_applied);
            if stats.patches_applied > n {
                run.bound_violations.push((h, seq as u64, stats.patches_applied, n));
            }
        }

        // advance to the boundary and offer one PATCH too many
        while handle.segment().unwrap().patches < n {
            let same = oracle.last().unwrap().clone();
            handle.commit(&same, 99).unwrap();
        }
        let head = handle.head().unwrap().unwrap();
        let forced = CommitRecord {
            repo_id: handle.repo_id(),
            seq: head.seq + 1,
            kind: CommitKind::Patch,
            cid: head.cid,
            parent_cid: Some(head.cid),
            dek_file_cid: head.dek_file_cid,
            author_id: owner.id(),
            timestamp: 100,
            signature: Vec::new(),
        }
        .signed_by(&owner);
        match ledger.commit_data(CommitRequest::from(&forced)) {
            Err(chainledger::Error::CheckpointRequired) => run.boundary_rejections += 1,
            other => run.boundary_failures.push(format!("history {h}: {other:?}")),
        }
        run.histories += 1;
    }
    run.elapsed = started.elapsed();
    run
}

#[test]
fn criterion_1_oracle_equivalence() {
    let run = histories();
    let pass = run.histories == C1_HISTORIES && run.mismatches.is_empty() && run.elapsed < C1_TIME_LIMIT;
    report(
        1,
        pass,
        format_args!(
            "{} histories, {} checkouts, {} mismatches, {:.1} s (limit {} s)",
            run.histories,
            run.checkouts,
            run.mismatches.len(),
            run.elapsed.as_secs_f64(),
            C1_TIME_LIMIT.as_secs()
        ),
    );
    assert!(run.mismatches.is_empty(), "{:?}", run.mismatches);
    assert!(run.elapsed < C1_TIME_LIMIT, "took {:?}", run.elapsed);
}

#[test]
fn criterion_4_checkpoint_bound() {
    let run = histories();
    let pass = run.bound_violations.is_empty()
        && run.schedule_violations.is_empty()
        && run.boundary_rejections == C1_HISTORIES;
    report(
        4,
        pass,
        format_args!(
            "max patches applied per N {:?}, {} bound violations, {} schedule violations, {}/{} boundary PATCHes rejected",
            run.max_patches,
            run.bound_violations.len(),
            run.schedule_violations.len(),
            run.boundary_rejections,
            C1_HISTORIES
        ),
    );
    assert!(run.bound_violations.is_empty(), "{:?}", run.bound_violations);
    assert!(run.schedule_violations.is_empty(), "{:?}", run.schedule_violations);
    assert!(run.boundary_failures.is_empty(), "{:?}", run.boundary_failures);
}

struct Persisted {
    dir: tempfile::TempDir,
    repo_id: RepoId,
    owner_seed: u64,
}

impl Persisted {
    fn ledger_dir(&self) -> std::path::PathBuf {
        self.dir.path().join("ledger")
    }

    fn cas_dir(&self) -> std::path::PathBuf {
        self.dir.path().join("cas")
    }

    /// Reopens everything from disk and audits it.
    fn verify(&self) -> Result<edgchain_vault::chainledger::AuditReport, repoclient::Error> {
        let ledger = Arc::new(Ledger::open(self.ledger_dir())?);
        let store = Arc::new(Store::open(self.cas_dir())?);
        let handle = RepositoryHandle::open(ledger, store, self.repo_id, ident(self.owner_seed))?;
        handle.verify()
    }
}

fn persisted_repo(commits: usize, interval: u64, seed: u64) -> (Persisted, Vec<Vec<u8>>) {
    let dir = tempfile::tempdir().unwrap();
    let ledger = Arc::new(Ledger::open(dir.path().join("ledger")).unwrap());
    let store = Arc::new(Store::open(dir.path().join("cas")).unwrap());
    let owner = ident(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut versions = vec![random_bytes(&mut rng, 8192)];
    let mut handle = RepositoryHandle::init(
        ledger,
        store,
        ident(seed),
        vec![Member::new(Role::Owner, *owner.public())],
        interval,
        &versions[0],
        1,
    )
    .unwrap();
    for i in 1..commits {
        let next = mutate(&mut rng, versions.last().unwrap(), 16 * 1024);
        handle.commit(&next, 1 + i as u64).unwrap();
        versions.push(next);
    }
    let repo_id = handle.repo_id();
    (
        Persisted {
            dir,
            repo_id,
            owner_seed: seed,
        },
        versions,
    )
}

fn frames(bytes: &[u8]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos + 4 <= bytes.len() {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        out.push((pos + 4, len));
        pos += 4 + len;
    }
    out
}

/// Field layout of a stored commit record: name, offset, length.
const RECORD_FIELDS: [(&str, usize, usize); 11] = [
    ("magic", 0, 5),
    ("repo_id", 5, 32),
    ("seq", 37, 8),
    ("kind", 45, 1),
    ("cid", 46, 32),
    ("parent_cid", 78, 32),
    ("dek_file_cid", 110, 32),
    ("author_id", 142, 32),
    ("timestamp", 174, 8),
    ("sig_len", 182, 4),
    ("signature", 186, 64),
];

#[test]
fn criterion_2_tamper_detection() {
    let (repo, _) = persisted_repo(C2_COMMITS, 3, 0xc2);
    let pristine = repo.verify().unwrap();
    let false_positives = pristine.failing_seqs().len() + usize::from(!pristine.verdict());

    let ledger = Ledger::open(repo.ledger_dir()).unwrap();
    let records = ledger.commits(&repo.repo_id).unwrap();
    drop(ledger);
    let mut referencing: BTreeMap<Cid, BTreeSet<u64>> = BTreeMap::new();
    for r in &records {
        referencing.entry(r.cid).or_default().insert(r.seq);
        referencing.entry(r.dek_file_cid).or_default().insert(r.seq);
    }

    let mut cases = 0usize;
    let mut misses = Vec::new();

    // every stored object: one flipped byte, and removal
    let store = Store::open(repo.cas_dir()).unwrap();
    for cid in store.list().unwrap() {
        let path = store.object_path(&cid);
        let original = fs::read(&path).unwrap();
        let want = referencing.get(&cid).cloned().unwrap_or_default();
        for probe in [0, original.len() / 2, original.len() - 1] {
            let mut bad = original.clone();
            bad[probe] ^= 0x40;
            fs::write(&path, &bad).unwrap();
            let got: BTreeSet<u64> = repo.verify().unwrap().failing_seqs().into_iter().collect();
            cases += 1;
            if got != want {
                misses.push(format!("object {cid} byte {probe}: flagged {got:?}, expected {want:?}"));
            }
        }
        fs::remove_file(&path).unwrap();
        let got: BTreeSet<u64> = repo.verify().unwrap().failing_seqs().into_iter().collect();
        cases += 1;
        if got != want {
            misses.push(format!("object {cid} removed: flagged {got:?}, expected {want:?}"));
        }
        fs::write(&path, &original).unwrap();
    }

    // every byte of every field of every stored record
    let records_path = repo.ledger_dir().join(repo.repo_id.to_hex()).join("records.log");
    let original = fs::read(&records_path).unwrap();
    let layout = frames(&original);
    assert_eq!(layout.len(), C2_COMMITS);
    for (seq, &(start, len)) in layout.iter().enumerate() {
        assert_eq!(len, 250, "record layout changed");
        for (field, off, flen) in RECORD_FIELDS {
            for b in 0..flen {
                let mut bad = original.clone();
                bad[start + off + b] ^= 0x01;
                fs::write(&records_path, &bad).unwrap();
                cases += 1;
                let named = match repo.verify() {
                    Ok(report) => !report.verdict() && report.failing_seqs().contains(&(seq as u64)),
                    Err(repoclient::Error::Ledger(chainledger::Error::CorruptRecord { seq: s, .. })) => s == seq as u64,
                    Err(e) => {
                        misses.push(format!("record {seq} {field}[{b}]: {e}"));
                        continue;
                    }
                };
                if !named {
                    misses.push(format!("record {seq} {field}[{b}] not attributed"));
                }
            }
        }
    }
    fs::write(&records_path, &original).unwrap();
    let restored = repo.verify().unwrap().verdict();

    let pass = false_positives == 0 && misses.is_empty() && restored;
    report(
        2,
        pass,
        format_args!(
            "{cases} tamper cases, {} false negatives, {false_positives} false positives on pristine repo",
            misses.len()
        ),
    );
    assert_eq!(false_positives, 0, "{pristine:?}");
    assert!(misses.is_empty(), "{misses:#?}");
    assert!(restored);
}

fn scan_for_plaintext(root: &Path, windows: &HashSet<[u8; C3_WINDOW]>) -> (usize, Vec<String>) {
    let mut scanned = 0;
    let mut hits = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let bytes = fs::read(&path).unwrap();
            scanned += bytes.len();
            if bytes
                .windows(C3_WINDOW)
                .any(|w| windows.contains(<&[u8; C3_WINDOW]>::try_from(w).unwrap()))
            {
                hits.push(path.display().to_string());
            }
        }
    }
    (scanned, hits)
}

fn commit_one(
    h: &mut RepositoryHandle,
    versions: &mut Vec<Vec<u8>>,
    readers: &BTreeSet<u64>,
    access: &mut BTreeMap<u64, BTreeSet<u64>>,
    rng: &mut ChaCha8Rng,
) -> CommitRecord {
    let next = mutate(rng, versions.last().unwrap(), 96 * 1024);
    let rec = h.commit(&next, versions.len() as u64).unwrap();
    if rec.kind.starts_segment() {
        access.insert(rec.seq, readers.clone());
    }
    versions.push(next);
    rec
}

#[test]
fn criterion_3_confidentiality() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = Arc::new(Ledger::open(dir.path().join("ledger")).unwrap());
    let store = Arc::new(Store::open(dir.path().join("cas")).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(0xc3);
    let (owner, member, late, outsider) = (30, 31, 32, 33);
    let mut h = RepositoryHandle::init(
        ledger.clone(),
        store.clone(),
        ident(owner),
        vec![
            Member::new(Role::Owner, *ident(owner).public()),
            Member::new(Role::Contributor, *ident(member).public()),
        ],
        4,
        &random_bytes(&mut rng, 64 * 1024),
        1,
    )
    .unwrap();
    let mut versions = vec![h.working_plaintext().unwrap().to_vec()];
    // readers of each segment, keyed by its first seq
    let mut access: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::from([(0, BTreeSet::from([owner, member]))]);
    let mut readers = BTreeSet::from([owner, member]);
    for _ in 0..3 {
        commit_one(&mut h, &mut versions, &readers, &mut access, &mut rng);
    }
    let anchor = h.grant(*ident(late).public(), Role::Reviewer, 50).unwrap().unwrap();
    versions.push(versions.last().unwrap().clone());
    readers.insert(late);
    if anchor.kind.starts_segment() {
        access.insert(anchor.seq, readers.clone());
    } else {
        access.values_mut().last().unwrap().insert(late);
    }
    for _ in 0..4 {
        commit_one(&mut h, &mut versions, &readers, &mut access, &mut rng);
    }
    h.revoke(&ident(member).id(), 60).unwrap();
    readers.remove(&member);
    let after = commit_one(&mut h, &mut versions, &readers, &mut access, &mut rng);
    assert!(after.kind.starts_segment());
    for _ in 0..6 {
        commit_one(&mut h, &mut versions, &readers, &mut access, &mut rng);
    }

    let mut windows = HashSet::new();
    for v in &versions {
        for w in v.windows(C3_WINDOW) {
            windows.insert(<[u8; C3_WINDOW]>::try_from(w).unwrap());
        }
    }
    // positive control: the scanner finds plaintext when it is there
    let control = tempfile::tempdir().unwrap();
    fs::write(control.path().join("plain"), &versions[3][100..200]).unwrap();
    let control_ok = scan_for_plaintext(control.path(), &windows).1.len() == 1;
    let (scanned, hits) = scan_for_plaintext(dir.path(), &windows);

    let mut wrong_access = Vec::new();
    let mut denials = 0;
    for who in [owner, member, late, outsider] {
        let reader = RepositoryHandle::open(ledger.clone(), store.clone(), h.repo_id(), ident(who)).unwrap();
        for (seq, want) in versions.iter().enumerate() {
            let segment = *access.range(..=seq as u64).next_back().unwrap().0;
            let allowed = access[&segment].contains(&who);
            match reader.checkout(seq as u64) {
                Ok(got) if allowed && &got == want => {}
                Err(e) if !allowed && e.is_not_a_recipient() => denials += 1,
                other => wrong_access.push(format!(
                    "identity {who} seq {seq}: allowed={allowed} got {:?}",
                    other.map(|v| v.len())
                )),
            }
        }
    }
    let pass = control_ok && hits.is_empty() && wrong_access.is_empty();
    report(
        3,
        pass,
        format_args!(
            "{scanned} persisted bytes scanned, {} files with a {C3_WINDOW}-byte plaintext match, {denials} NotARecipient denials, {} access errors",
            hits.len(),
            wrong_access.len()
        ),
    );
    assert!(control_ok);
    assert!(hits.is_empty(), "{hits:?}");
    assert!(wrong_access.is_empty(), "{wrong_access:#?}");
}

#[test]
fn criterion_5_storage_efficiency() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let ledger = Arc::new(Ledger::in_memory());
    let store = Arc::new(Store::open(dir.path()).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(0xc5);
    let owner = ident(50);
    let mut current = random_bytes(&mut rng, C5_BASE);
    let mut h = RepositoryHandle::init(
        ledger,
        store.clone(),
        ident(50),
        vec![Member::new(Role::Owner, *owner.public())],
        16,
        &current,
        1,
    )
    .unwrap();
    let mut samples = BTreeMap::new();
    for i in 1..=C5_COMMITS {
        let at = rng.gen_range(0..=C5_BASE - C5_EDIT);
        rng.fill_bytes(&mut current[at..at + C5_EDIT]);
        h.commit(&current, i as u64).unwrap();
        if i % 17 == 5 {
            samples.insert(i as u64, current.clone());
        }
    }
    let total = store.total_bytes().unwrap();
    let baseline = (C5_COMMITS as u64 + 1) * C5_BASE as u64;
    let ratio = total as f64 / baseline as f64;
    let reconstruct_ok = samples.iter().all(|(seq, want)| &h.checkout(*seq).unwrap() == want)
        && h.checkout(C5_COMMITS as u64).unwrap() == current;
    let elapsed = started.elapsed();
    let pass = ratio <= C5_MAX_RATIO && elapsed < C5_TIME_LIMIT && reconstruct_ok;
    report(
        5,
        pass,
        format_args!(
            "{total} CAS bytes vs {baseline} baseline = {:.2}% (limit {:.0}%), {:.1} s (limit {} s)",
            ratio * 100.0,
            C5_MAX_RATIO * 100.0,
            elapsed.as_secs_f64(),
            C5_TIME_LIMIT.as_secs()
        ),
    );
    assert!(reconstruct_ok);
    assert!(ratio <= C5_MAX_RATIO, "ratio {ratio}");
    assert!(elapsed < C5_TIME_LIMIT, "took {elapsed:?}");
}

#[test]
fn criterion_6_authorization_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = Arc::new(Ledger::open(dir.path().join("ledger")).unwrap());
    let store = Arc::new(Store::open(dir.path().join("cas")).unwrap());
    let (owner, contributor, reviewer, outsider) = (ident(60), ident(61), ident(62), ident(63));
    let mut writer = RepositoryHandle::init(
        ledger.clone(),
        store,
        ident(60),
        vec![
            Member::new(Role::Owner, *owner.public()),
            Member::new(Role::Contributor, *contributor.public()),
            Member::new(Role::Reviewer, *reviewer.public()),
        ],
        16,
        b"initial",
        1,
    )
    .unwrap();
    let repo = writer.repo_id();
    let mut rng = ChaCha8Rng::seed_from_u64(0xc6);
    let mut rejected = 0;
    let mut wrong = Vec::new();
    for attempt in 0..C6_ATTEMPTS {
        if attempt % 50 == 49 {
            let payload = random_bytes(&mut rng, 64);
            writer.commit(&payload, attempt as u64).unwrap();
        }
        let head = ledger.get_head(&repo).unwrap();
        let interval = ledger.checkpoint_interval(&repo).unwrap();
        let since = head.seq
            - ledger
                .commits(&repo)
                .unwrap()
                .iter()
                .rev()
                .find(|r| r.kind.starts_segment())
                .unwrap()
                .seq;
        let kind = if since >= interval {
            CommitKind::CheckpointGenesis
        } else {
            CommitKind::Patch
        };
        let mut rec = CommitRecord {
            repo_id: repo,
            seq: head.seq + 1,
            kind,
            cid: Cid::of(&random_bytes(&mut rng, 32)),
            parent_cid: Some(head.cid),
            dek_file_cid: head.dek_file_cid,
            author_id: owner.id(),
            timestamp: 1000 + attempt as u64,
            signature: Vec::new(),
        };
        let case = rng.gen_range(0..5);
        let expected = match case {
            0 => {
                rec.author_id = reviewer.id();
                rec = rec.signed_by(&reviewer);
                "PermissionDenied"
            }
            1 => {
                rec.author_id = outsider.id();
                rec = rec.signed_by(&outsider);
                "PermissionDenied"
            }
            2 => {
                rec.signature = random_bytes(&mut rng, 64);
                "BadSignature"
            }
            3 => {
                // valid contributor signature presented as the owner's
                rec.author_id = contributor.id();
                rec = rec.signed_by(&contributor);
                rec.author_id = owner.id();
                "BadSignature"
            }
            _ => {
                rec = rec.signed_by(&owner);
                match rng.gen_range(0..3) {
                    0 => rec.cid = Cid::of(b"swapped payload"),
                    1 => rec.timestamp ^= 1,
                    _ => rec.dek_file_cid = Cid::of(b"swapped dek file"),
                }
                "BadSignature"
            }
        };
        let before = ledger.events(&repo, 0).unwrap().len();
        let got = match ledger.commit_data(CommitRequest::from(&rec)) {
            Err(chainledger::Error::PermissionDenied) => "PermissionDenied",
            Err(chainledger::Error::BadSignature) => "BadSignature",
            Ok(_) => "accepted",
            Err(_) => "other",
        };
        let unchanged = ledger.events(&repo, 0).unwrap().len() == before;
        if got == expected && unchanged {
            rejected += 1;
        } else {
            wrong.push(format!("attempt {attempt} case {case}: expected {expected}, got {got}"));
        }
    }

    let events = ledger.events(&repo, 0).unwrap();
    let replayed = LedgerState::replay(&events).unwrap().canonical_bytes();
    let live = ledger.snapshot().canonical_bytes();
    let reopened = Ledger::open(dir.path().join("ledger"))
        .unwrap()
        .snapshot()
        .canonical_bytes();
    let replay_ok = replayed == live && reopened == live;
    let pass = rejected == C6_ATTEMPTS && replay_ok;
    report(
        6,
        pass,
        format_args!(
            "{rejected}/{C6_ATTEMPTS} forged or unauthorized commits rejected with the expected error; replay of {} events bit-identical: {replay_ok}",
            events.len()
        ),
    );
    assert!(wrong.is_empty(), "{wrong:#?}");
    assert!(replay_ok);
}

#[test]
fn criterion_7_crypto_conformance() {
    // (key, iv, plaintext, aad, ciphertext ‖ tag) from the GCM specification
    let gcm = [
        ("00".repeat(32), "00".repeat(12), String::new(), String::new(), "530f8afbc74536b9a963b4f1c4cb738b".to_string()),
        (
            "00".repeat(32),
            "00".repeat(12),
            "00".repeat(16),
            String::new(),
            "cea7403d4d606b6e074ec5d3baf39d18d0d1c8a799996bf0265b98b5d48ab919".to_string(),
        ),
        (
            "feffe9928665731c6d6a8f9467308308feffe9928665731c6d6a8f9467308308".to_string(),
            "cafebabefacedbaddecaf888".to_string(),
            "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b39".to_string(),
            "feedfacedeadbeeffeedfacedeadbeefabaddad2".to_string(),
            "522dc1f099567d07f47f37a32a84427d643a8cdcbfe5c0c97598a2bd2555d1aa8cb08e48590dbb3da7b08b1056828838c5f61e6393ba7a0abcc9f66276fc6ece0f4e1768cddf8853bb2d551b".to_string(),
        ),
    ];
    let mut gcm_ok = 0;
    for (key, iv, pt, aad, want) in &gcm {
        let dek = Dek::from_bytes(hex::decode(key).unwrap().try_into().unwrap());
        let nonce: [u8; 12] = hex::decode(iv).unwrap().try_into().unwrap();
        let pt = hex::decode(pt).unwrap();
        let aad = hex::decode(aad).unwrap();
        let sealed = cryptbox::seal_with_nonce(&pt, &dek, &nonce, &aad).unwrap();
        let mut got = sealed.ciphertext.clone();
        got.extend_from_slice(&sealed.tag);
        let opened = cryptbox::open_with_aad(&sealed, &dek, &aad).unwrap();
        if hex::encode(got) == *want && opened == pt {
            gcm_ok += 1;
        }
    }

    let sha = [
        (
            b"".to_vec(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        ),
        (
            b"abc".to_vec(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
        ),
        (
            b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq".to_vec(),
            "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1",
        ),
        (
            vec![b'a'; 1_000_000],
            "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0",
        ),
    ];
    let sha_ok = sha.iter().filter(|(m, want)| Cid::of(m).to_hex() == *want).count();

    let mut rng = ChaCha8Rng::seed_from_u64(0xc7);
    let mut opened = 0;
    let mut refused = 0;
    let mut dek_failures = Vec::new();
    for trial in 0..C7_ROSTER_TRIALS {
        let size = rng.gen_range(1..=20);
        let roster: Vec<Identity> = (0..size).map(|_| cryptbox::keygen(None).unwrap()).collect();
        let strangers: Vec<Identity> = (0..3).map(|_| cryptbox::keygen(None).unwrap()).collect();
        let dek = cryptbox::generate_dek().unwrap();
        let segment = Cid::of(&random_bytes(&mut rng, 32));
        let recipients: Vec<_> = roster.iter().map(|i| (i.id(), i.public().encryption)).collect();
        let version = rng.gen_range(1..100);
        let file = cryptbox::build_dek_file(&dek, &segment, &recipients, version).unwrap();
        for member in &roster {
            match cryptbox::open_dek_file(&file, member) {
                Ok(d) if d.as_bytes() == dek.as_bytes() => opened += 1,
                other => dek_failures.push(format!("trial {trial}: member got {other:?}")),
            }
        }
        for s in &strangers {
            match cryptbox::open_dek_file(&file, s) {
                Err(cryptbox::Error::NotARecipient) => refused += 1,
                other => dek_failures.push(format!("trial {trial}: stranger got {other:?}")),
            }
        }
    }
    let pass = gcm_ok == gcm.len() && sha_ok == sha.len() && dek_failures.is_empty();
    report(
        7,
        pass,
        format_args!(
            "AES-256-GCM vectors {gcm_ok}/{}, SHA-256 vectors {sha_ok}/{}, DEK file: {opened} recipient opens, {refused} non-recipient refusals, {} failures",
            gcm.len(),
            sha.len(),
            dek_failures.len()
        ),
    );
    assert_eq!(gcm_ok, gcm.len());
    assert_eq!(sha_ok, sha.len());
    assert!(dek_failures.is_empty(), "{dek_failures:#?}");
}
