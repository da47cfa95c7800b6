//! Writes a synthetic corpus (metadata.csv plus PNG images) to a directory.
//!
//! `cargo run --example write_synthetic -- <dir> [seed] [records]`

use std::path::PathBuf;

use mmevent_core::synthetic::{generate, SyntheticConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next().map(PathBuf::from) else {
        eprintln!("usage: write_synthetic <dir> [seed] [records]");
        std::process::exit(1);
    };
    let seed = args
        .next()
        .map_or(0, |s| s.parse().expect("seed is an integer"));
    let mut cfg = SyntheticConfig::default().with_seed(seed);
    if let Some(n) = args.next() {
        cfg = cfg.with_records(n.parse().expect("records is an integer"));
    }
    let corpus = generate(&cfg);
    if let Err(e) = corpus.write_to(&dir) {
        eprintln!("cannot write {}: {e}", dir.display());
        std::process::exit(2);
    }
    println!(
        "{} records written to {}",
        corpus.corpus.records().len(),
        dir.display()
    );
}
