//! Grants and revokes read access. Revocation takes effect at the next
//! commit, which re-keys the repository under a new segment.

use std::sync::Arc;

use edgchain_vault::cas::Store;
use edgchain_vault::chainledger::{Ledger, Role};
use edgchain_vault::cryptbox;
use edgchain_vault::repoclient::RepositoryHandle;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ledger = Arc::new(Ledger::in_memory());
    let dir = tempfile::tempdir()?;
    let store = Arc::new(Store::open(dir.path())?);
    let owner = cryptbox::keygen(Some(&[5; 32]))?;
    let reader = cryptbox::keygen(Some(&[6; 32]))?;
    let reader_pub = *reader.public();

    let mut repo = RepositoryHandle::init(ledger.clone(), store.clone(), owner, Vec::new(), 16, b"draft 1", 10)?;
    repo.commit(b"draft 2", 11)?;
    let anchor = repo.grant(reader_pub, Role::Reviewer, 12)?;
    println!("granted reviewer; anchor commit at seq {:?}", anchor.map(|r| r.seq));

    let theirs = RepositoryHandle::open(ledger.clone(), store.clone(), repo.repo_id(), reader)?;
    println!("reviewer reads seq 1: {:?}", String::from_utf8(theirs.checkout(1)?)?);

    repo.revoke(&reader_pub.id, 13)?;
    println!("revoked; the old segment is still readable with the old key");
    println!("reviewer reads seq 1: {:?}", String::from_utf8(theirs.checkout(1)?)?);

    let rec = repo.commit(b"draft 3, confidential", 14)?;
    println!("next commit is seq {} {}", rec.seq, rec.kind);
    match theirs.checkout(rec.seq) {
        Err(e) => println!("reviewer reads seq {}: {e}", rec.seq),
        Ok(_) => unreachable!("revoked reader holds no key for the new segment"),
    }
    Ok(())
}
