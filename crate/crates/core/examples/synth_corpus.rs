//! Synthesize a small instruction corpus, clean it and print its profile.
//!
//!     cargo run --example synth_corpus -- out.jsonl

use taskroute::dataset::{clean, save_jsonl, stats, synth_corpus, Distribution, Split, TemplateBank};

fn main() {
    let dist = Distribution::scaled(Split::Bench, 0.02);
    let records = synth_corpus(&dist, 7, &TemplateBank::shipped()).expect("grammar is large enough");
    let (records, report) = clean(records);
    println!("{} records, {} removed as duplicates", records.len(), report.removed.len());
    for r in records.iter().step_by(records.len() / 4).take(4) {
        println!("[{}] {}\n    {}", r.complexity.code(), r.instruction, r.gold_response());
    }
    println!("{}", stats(&records));

    if let Some(path) = std::env::args().nth(1) {
        save_jsonl(&records, &path).unwrap();
        println!("saved to {path}");
    }
}
