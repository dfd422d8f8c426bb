//! Writes the synthetic 112 × 9 expression fixture used by the tests and
//! the default run. Four profile classes over the nine developmental time
//! points plus Gaussian noise; the class is kept as an annotation column.
//!
//!     cargo run -p dpclust-cli --example make_fixture -- data/expression_fixture.tsv

use std::io::Write;

use dpclust::rng::RngStream;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

const TIMES: [&str; 9] = ["E11", "E13", "E15", "E18", "E21", "P0", "P7", "P14", "A"];

fn main() -> std::io::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/expression_fixture.tsv".into());
    let classes: [(&str, usize, [f64; 9]); 4] = [
        ("early", 30, [2.0, 1.6, 1.2, 0.7, 0.3, 0.1, 0.0, -0.1, -0.2]),
        ("late", 30, [-1.5, -1.2, -0.8, -0.3, 0.1, 0.5, 0.9, 1.2, 1.4]),
        ("transient", 22, [0.0, 0.4, 0.9, 1.5, 1.7, 1.4, 0.6, 0.2, 0.0]),
        ("constant", 30, [0.0; 9]),
    ];
    let mut rng = RngStream::new(112_009);
    let noise = Normal::new(0.0, 0.25).unwrap();
    let gain = Normal::new(1.0, 0.15).unwrap();
    let mut rows = Vec::new();
    for (name, count, profile) in &classes {
        for _ in 0..*count {
            let g: f64 = gain.sample(&mut rng);
            let shift: f64 = rng.random_range(-0.2..0.2);
            let values: Vec<f64> = profile.iter().map(|m| g * m + shift + noise.sample(&mut rng)).collect();
            rows.push((*name, values));
        }
    }
    rows.shuffle(&mut rng);
    let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(out, "id\t{}\tclass", TIMES.join("\t"))?;
    for (i, (class, values)) in rows.iter().enumerate() {
        let cells: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(out, "gene{:03}\t{}\t{class}", i + 1, cells.join("\t"))?;
    }
    Ok(())
}
