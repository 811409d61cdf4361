//! Seals a blob under a fresh data key and wraps that key for two readers.

use edgchain_vault::cas::Cid;
use edgchain_vault::cryptbox::{self, DekFile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let alice = cryptbox::keygen(Some(&[1; 32]))?;
    let bob = cryptbox::keygen(Some(&[2; 32]))?;
    let eve = cryptbox::keygen(None)?;

    let plain = b"quarterly numbers, do not forward";
    let segment = Cid::of(b"segment-0");
    let dek = cryptbox::generate_dek()?;
    let sealed = cryptbox::encrypt_blob(plain, &dek, Some(&segment))?;
    println!(
        "{} plaintext bytes -> {} sealed bytes",
        plain.len(),
        sealed.to_bytes().len()
    );

    let recipients = [
        (alice.id(), alice.public().encryption),
        (bob.id(), bob.public().encryption),
    ];
    let dek_file = cryptbox::build_dek_file(&dek, &segment, &recipients, 1)?;
    let parsed = DekFile::parse(&dek_file)?;
    println!(
        "dek file v{}: {} recipients",
        parsed.version,
        parsed.recipients().count()
    );

    let bobs_dek = cryptbox::open_dek_file(&dek_file, &bob)?;
    let opened = cryptbox::decrypt_blob(&sealed, &bobs_dek, Some(&segment))?;
    assert_eq!(opened, plain);
    println!("bob reads: {}", String::from_utf8_lossy(&opened));

    match cryptbox::open_dek_file(&dek_file, &eve) {
        Err(e) => println!("eve: {e}"),
        Ok(_) => unreachable!("eve is not a recipient"),
    }
    let wrong_segment = Cid::of(b"segment-1");
    assert!(cryptbox::decrypt_blob(&sealed, &bobs_dek, Some(&wrong_segment)).is_err());
    println!("moving the blob to another segment breaks authentication");
    Ok(())
}
