//! Diffs two versions of a binary file and applies the patch.

use edgchain_vault::patchset::{self, PatchOp};

fn pseudo_random(len: usize, mut x: u64) -> Vec<u8> {
    (0..len)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            x as u8
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = pseudo_random(256 * 1024, 7);
    let mut target = base.clone();
    target[40_000..40_100].fill(0);
    target.splice(120_000..120_000, b"inserted".iter().copied());
    target.truncate(200_000);

    let patch = patchset::diff(&base, &target)?;
    let encoded = patch.to_bytes();
    let (copies, inserted) = patch.ops.iter().fold((0, 0), |(c, i), op| match op {
        PatchOp::Copy { len, .. } => (c + len, i),
        PatchOp::Insert(bytes) => (c, i + bytes.len()),
    });
    println!("{} ops, {copies} bytes copied, {inserted} inserted", patch.ops.len());
    println!(
        "patch is {} bytes, {:.2}% of the target",
        encoded.len(),
        100.0 * encoded.len() as f64 / target.len() as f64
    );

    let parsed = patchset::parse_patch(&encoded)?;
    assert_eq!(patchset::apply(&base, &parsed)?, target);
    assert!(patchset::apply(&target, &parsed).is_err(), "wrong base is rejected");
    println!("roundtrip ok");
    Ok(())
}
