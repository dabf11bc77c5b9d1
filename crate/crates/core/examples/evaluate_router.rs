//! Score the rule router and the replay router on the same corpus.

use taskroute::controller::{ReplayController, RuleRouter};
use taskroute::dataset::{synth_corpus, Distribution, Split, TemplateBank};
use taskroute::eval::evaluate;

fn main() {
    let corpus = synth_corpus(&Distribution::scaled(Split::Instruct, 0.01), 7, &TemplateBank::shipped()).unwrap();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());

    let rule = evaluate(&RuleRouter::shipped(), &corpus, workers).unwrap();
    println!("{rule}\n");

    // Replaying gold responses must score perfectly.
    let replay = evaluate(&ReplayController::new(&corpus), &corpus, workers).unwrap();
    println!("{replay}");
}
