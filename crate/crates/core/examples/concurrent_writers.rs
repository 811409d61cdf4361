//! Two processes' worth of handles commit against one on-disk ledger.
//! The loser of each race sees a stale parent, refreshes, and retries.

use std::sync::Arc;
use std::thread;

use edgchain_vault::cas::Store;
use edgchain_vault::chainledger::{self, Ledger, Member, Role};
use edgchain_vault::cryptbox;
use edgchain_vault::repoclient::{self, RepositoryHandle};

const COMMITS_EACH: u64 = 10;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let ledger_dir = dir.path().join("ledger");
    let cas_dir = dir.path().join("cas");
    let alice = cryptbox::keygen(Some(&[8; 32]))?;
    let bob = cryptbox::keygen(Some(&[9; 32]))?;
    let members = vec![Member::new(Role::Contributor, *bob.public())];

    let repo_id = {
        let ledger = Arc::new(Ledger::open(&ledger_dir)?);
        let store = Arc::new(Store::open(&cas_dir)?);
        RepositoryHandle::init(ledger, store, alice.clone(), members, 4, b"", 0)?.repo_id()
    };

    let workers: Vec<_> = [("alice", alice), ("bob", bob)]
        .into_iter()
        .map(|(name, me)| {
            let (ledger_dir, cas_dir) = (ledger_dir.clone(), cas_dir.clone());
            thread::spawn(move || -> Result<u64, repoclient::Error> {
                // separate handles, as separate processes would have
                let ledger = Arc::new(Ledger::open(&ledger_dir)?);
                let store = Arc::new(Store::open(&cas_dir)?);
                let mut repo = RepositoryHandle::open(ledger, store, repo_id, me)?;
                let mut retries = 0;
                for i in 0..COMMITS_EACH {
                    loop {
                        repo.refresh()?;
                        let mut text = repo.working_plaintext().unwrap_or_default().to_vec();
                        text.extend_from_slice(format!("{name} {i}\n").as_bytes());
                        match repo.commit(&text, i + 1) {
                            Ok(_) => break,
                            Err(e)
                                if matches!(e.root(), repoclient::Error::Ledger(chainledger::Error::StaleParent)) =>
                            {
                                retries += 1
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
                Ok(retries)
            })
        })
        .collect();
    for (name, w) in ["alice", "bob"].iter().zip(workers) {
        println!("{name}: {} stale-parent retries", w.join().unwrap()?);
    }

    let ledger = Arc::new(Ledger::open(&ledger_dir)?);
    let store = Arc::new(Store::open(&cas_dir)?);
    let head = ledger.get_head(&repo_id)?;
    println!("head is seq {} ({} commits)", head.seq, head.seq + 1);
    let reader = RepositoryHandle::open(ledger, store, repo_id, cryptbox::keygen(Some(&[8; 32]))?)?;
    let text = String::from_utf8(reader.checkout(head.seq)?)?;
    println!("{} lines in the final text", text.lines().count());
    assert!(reader.verify()?.verdict());
    Ok(())
}
