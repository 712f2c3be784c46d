//! Prints the noise series used by the stationarity reference check, one
//! series per line: `kind,seed,v0 v1 ...`.
//!
//! `cargo run --example dump_noise_series > series.csv`

use std::io::{self, BufWriter, Write};

use stance_core::syngen::{ar1, random_walk, white_noise};

const LENGTH: usize = 500;
const SEEDS: u64 = 100;

fn main() -> io::Result<()> {
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "kind,seed,values")?;
    for seed in 0..SEEDS {
        for (kind, series) in [
            ("white", white_noise(LENGTH, seed)),
            ("walk", random_walk(LENGTH, seed)),
            ("ar1", ar1(LENGTH, 0.5, seed)),
        ] {
            let values: Vec<String> = series.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{kind},{seed},{}", values.join(" "))?;
        }
    }
    out.flush()
}
