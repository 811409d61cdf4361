//! Stores blobs by their SHA-256, pins one, and garbage-collects the rest.

use std::collections::BTreeSet;

use edgchain_vault::cas::{Cid, Store};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let store = Store::open(dir.path().join("cas"))?;

    let kept = store.put(b"kept across gc")?;
    let loose = store.put(b"collected by gc")?;
    assert_eq!(kept, Cid::of(b"kept across gc"));
    assert_eq!(store.put(b"kept across gc")?, kept, "puts are idempotent");
    println!("kept  {kept}");
    println!("loose {loose}");
    println!("object path {}", store.object_path(&kept).display());

    store.pin(&kept)?;
    let removed = store.gc(&BTreeSet::new())?;
    println!("gc removed {} blob(s)", removed.len());
    assert!(store.contains(&kept) && !store.contains(&loose));

    // survives a reopen
    drop(store);
    let store = Store::open(dir.path().join("cas"))?;
    assert!(store.is_pinned(&kept));
    println!(
        "after reopen: {} blob(s), {} bytes",
        store.list()?.len(),
        store.total_bytes()?
    );
    Ok(())
}
