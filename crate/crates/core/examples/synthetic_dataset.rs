//! Write a small synthetic dataset to a directory and list its manifest.
//!
//! `cargo run --release --example synthetic_dataset [out_dir]`

use std::path::PathBuf;

use stressnet::io::read_manifest;
use stressnet::synth::{gen_dataset, DatasetConfig};

fn main() -> stressnet::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("stressnet_synth"));
    let config = DatasetConfig { n_clips: 4, seed: 11, ..Default::default() };
    gen_dataset(&out, &config)?;

    for row in read_manifest(&out.join("manifest.csv"))? {
        let label = row.label.map(|l| l.to_string()).unwrap_or_default();
        println!("{:<10} {:<10} {}", row.trial_id, label, row.isti_csv.display());
    }
    println!("dataset in {}", out.display());
    Ok(())
}
