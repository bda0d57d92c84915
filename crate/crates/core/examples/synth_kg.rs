//! Writes a synthetic community-structured triple file.
//!
//! cargo run --example synth_kg -- out.tsv [entities relations triples seed]

use std::process::ExitCode;

use kgc::kg::serialize_triples;
use kgc::synth::SyntheticKg;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(path) = args.first() else {
        eprintln!("usage: synth_kg <out.tsv> [entities relations triples seed]");
        return ExitCode::from(2);
    };
    let mut synth = SyntheticKg::default();
    let nums: Result<Vec<u64>, _> = args[1..].iter().map(|s| s.parse::<u64>()).collect();
    match nums.as_deref() {
        Ok([]) => {}
        Ok([e, r, t, s]) => {
            synth.entities = *e as usize;
            synth.relations = *r as usize;
            synth.triples = *t as usize;
            synth.seed = *s;
        }
        _ => {
            eprintln!("expected four integers: entities relations triples seed");
            return ExitCode::from(2);
        }
    }
    let triples = synth.generate();
    if let Err(e) = std::fs::write(path, serialize_triples(&triples)) {
        eprintln!("{path}: {e}");
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
