//! Writes an embedding bundle, reads it back and checks the bytes are
//! reproduced exactly.
//!
//!     cargo run --example bundle_io

use redemption_score::data::bundle::{read_bundle, write_bundle, EmbeddingTable};

fn main() -> redemption_score::Result<()> {
    let dir = std::env::temp_dir().join("redemption-bundle-io");
    std::fs::create_dir_all(&dir).map_err(|e| redemption_score::Error::InvalidInput(e.to_string()))?;
    let path = dir.join("clip_text.evb");

    let mut table = EmbeddingTable::new("clip_text", 3)?;
    table.insert("s1", vec![1.0, 0.0, 0.0])?;
    table.insert("s2", vec![0.0, 0.6, 0.8])?;
    table.insert("s3", vec![0.0, 0.0, 1.0])?;
    table.check_unit_norm()?;
    write_bundle(&path, &table)?;

    let first = std::fs::read(&path).unwrap();
    let back = read_bundle(&path, "clip_text")?;
    write_bundle(&path, &back)?;
    let second = std::fs::read(&path).unwrap();

    println!("{} entries of dim {}, {} bytes", back.len(), back.dim, first.len());
    println!("header: {:?}", first[..4].iter().map(|&b| b as char).collect::<String>());
    for (key, v) in back.iter() {
        println!("  {key}: {v:?}");
    }
    println!("byte-identical rewrite: {}", first == second);
    Ok(())
}
