//! Corrupts a stored blob and shows the audit pinning it to one commit.

use std::fs;
use std::sync::Arc;

use edgchain_vault::cas::Store;
use edgchain_vault::chainledger::Ledger;
use edgchain_vault::cryptbox;
use edgchain_vault::repoclient::RepositoryHandle;

fn print_report(repo: &RepositoryHandle) -> Result<(), Box<dyn std::error::Error>> {
    let report = repo.verify()?;
    println!("verdict: {}", if report.verdict() { "ok" } else { "FAILED" });
    for seq in report.failing_seqs() {
        let why: Vec<_> = report.findings_for(seq).iter().map(|f| f.describe()).collect();
        println!("  seq {seq}: {}", why.join(", "));
    }
    if let Some(r) = &report.reconstruction {
        println!("  reconstruction: {}", serde_json::to_string(r)?);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let ledger = Arc::new(Ledger::in_memory());
    let store = Arc::new(Store::open(dir.path())?);
    let me = cryptbox::keygen(Some(&[7; 32]))?;
    let mut repo = RepositoryHandle::init(ledger, store.clone(), me, Vec::new(), 8, b"alpha", 1)?;
    repo.commit(b"alpha beta", 2)?;
    let victim = repo.commit(b"alpha beta gamma", 3)?;
    repo.commit(b"alpha beta gamma delta", 4)?;
    print_report(&repo)?;

    let path = store.object_path(&victim.cid);
    let mut bytes = fs::read(&path)?;
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    fs::write(&path, bytes)?;
    println!("flipped one bit of the seq {} patch", victim.seq);
    print_report(&repo)?;

    // the handle that wrote seq 3 still caches it; a fresh one must replay
    let fresh = RepositoryHandle::open(repo.ledger().clone(), store, repo.repo_id(), repo.identity().clone())?;
    let err = fresh.checkout(3).unwrap_err();
    println!("checkout 3: {err} (blamed seq {:?})", err.seq());
    Ok(())
}
