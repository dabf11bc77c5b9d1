//! Evaluate a router with its last rules removed over growing task subsets.

use taskroute::controller::{Controller, RuleRouter, RuleSet};
use taskroute::dataset::{InstructionRecord, TemplateBank};
use taskroute::eval::{family_prefix_subsets, sweep, sweep_table, CorpusConfig};

fn main() {
    let lossy = RuleSet::shipped().without_last_fraction(0.1);
    println!("router keeps {} of {} rules", lossy.rules.len(), RuleSet::shipped().rules.len());
    let make = move |_: &[InstructionRecord]| -> Box<dyn Controller> { Box::new(RuleRouter::new(lossy.clone())) };
    let config = CorpusConfig { workers: 4, ..CorpusConfig::default() };
    let rows = sweep(&family_prefix_subsets(&[5, 10, 15, 20]), &make, &config, &TemplateBank::shipped());
    print!("{}", sweep_table(&rows));
}
