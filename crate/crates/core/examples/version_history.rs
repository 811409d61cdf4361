//! Commits a series of edits through the repository client and checks out
//! every version, reporting how many patches each checkout replayed.

use std::sync::Arc;

use edgchain_vault::cas::Store;
use edgchain_vault::chainledger::Ledger;
use edgchain_vault::cryptbox;
use edgchain_vault::repoclient::RepositoryHandle;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let ledger = Arc::new(Ledger::open(dir.path().join("ledger"))?);
    let store = Arc::new(Store::open(dir.path().join("cas"))?);
    let me = cryptbox::keygen(Some(&[4; 32]))?;

    let mut doc = b"# notes\n".to_vec();
    let mut versions = vec![doc.clone()];
    let mut repo = RepositoryHandle::init(ledger, store.clone(), me, Vec::new(), 3, &doc, 1)?;
    for day in 1..=7u64 {
        doc.extend_from_slice(format!("day {day}: nothing to report\n").as_bytes());
        let rec = repo.commit(&doc, 1 + day)?;
        versions.push(doc.clone());
        println!("seq {} {:<18} {}", rec.seq, rec.kind, rec.cid);
    }

    for (seq, want) in versions.iter().enumerate() {
        let (got, stats) = repo.checkout_with_stats(seq as u64)?;
        assert_eq!(&got, want);
        println!(
            "checkout {seq}: segment starts at {}, {} patch(es) applied",
            stats.segment_start, stats.patches_applied
        );
    }
    println!("{} blobs, {} bytes on disk", store.list()?.len(), store.total_bytes()?);
    Ok(())
}
