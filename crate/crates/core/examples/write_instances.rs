//! Regenerates the sample instances: `cargo run --example write_instances -- <dir>`.

use std::path::PathBuf;

use fpf_core::fixtures::sample_problems;
use fpf_core::io::InstanceFile;

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "instances".into()));
    std::fs::create_dir_all(&dir)?;
    for (name, p) in sample_problems() {
        std::fs::write(dir.join(format!("{name}.json")), InstanceFile::from_problem(&p).to_canonical())?;
    }
    // Points for `fpf verify`: an envy-free and an envious division of the weighted cake.
    std::fs::write(dir.join("fair_division.point.json"), "{\"point\": [0.3333333333333333, 0.3333333333333333, 0.3333333333333334]}\n")?;
    std::fs::write(dir.join("bad_division.point.json"), "{\"point\": [1.0, 0.0, 0.0]}\n")?;
    Ok(())
}
