//! Signs commit records and appends them to the ledger by hand, showing
//! the rules the ledger enforces on its own.

use edgchain_vault::cas::Cid;
use edgchain_vault::chainledger::{CommitKind, CommitRecord, CommitRequest, Ledger, Member, RepoConfig, Role};
use edgchain_vault::cryptbox::{self, Identity};

fn record(
    me: &Identity,
    repo: &Ledger,
    repo_id: edgchain_vault::chainledger::RepoId,
    kind: CommitKind,
    body: &[u8],
) -> CommitRecord {
    let head = repo.head(&repo_id).unwrap();
    CommitRecord {
        repo_id,
        seq: head.as_ref().map_or(0, |h| h.seq + 1),
        kind,
        cid: Cid::of(body),
        parent_cid: head.map(|h| h.cid),
        dek_file_cid: Cid::of(b"dek file"),
        author_id: me.id(),
        timestamp: 1_700_000_000,
        signature: Vec::new(),
    }
    .signed_by(me)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let owner = cryptbox::keygen(Some(&[3; 32]))?;
    let ledger = Ledger::in_memory();
    let config = RepoConfig::new(2, [Member::new(Role::Owner, *owner.public())]);
    let repo_id = ledger.create_repo(owner.public(), config, 1_700_000_000)?;
    println!("repo {repo_id}");

    for (kind, body) in [
        (CommitKind::Genesis, &b"v0"[..]),
        (CommitKind::Patch, b"v0->v1"),
        (CommitKind::Patch, b"v1->v2"),
    ] {
        let rec = record(&owner, &ledger, repo_id, kind, body);
        let seq = ledger.commit_data(CommitRequest::from(&rec))?;
        println!("seq {seq} {kind}");
    }

    // a third patch in the segment breaks the interval of 2
    let rec = record(&owner, &ledger, repo_id, CommitKind::Patch, b"v2->v3");
    println!(
        "third patch: {}",
        ledger.commit_data(CommitRequest::from(&rec)).unwrap_err()
    );
    let rec = record(&owner, &ledger, repo_id, CommitKind::CheckpointGenesis, b"v3");
    println!("seq {} checkpoint", ledger.commit_data(CommitRequest::from(&rec))?);

    // a stale parent is refused
    let mut stale = record(&owner, &ledger, repo_id, CommitKind::Patch, b"fork");
    stale.parent_cid = Some(Cid::of(b"v0"));
    let stale = stale.signed_by(&owner);
    println!(
        "stale parent: {}",
        ledger.commit_data(CommitRequest::from(&stale)).unwrap_err()
    );

    // so is a signature over different bytes
    let mut forged = record(&owner, &ledger, repo_id, CommitKind::Patch, b"v3->v4");
    forged.timestamp += 1;
    println!(
        "forged: {}",
        ledger.commit_data(CommitRequest::from(&forged)).unwrap_err()
    );
    Ok(())
}
