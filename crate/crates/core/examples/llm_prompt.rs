//! Print the generation prompt an instruction-writing model would receive
//! for one task, with and without example pairs.
//!
//!     cargo run --example llm_prompt -- depth_est

use taskroute::dataset::{build_llm_prompt, PromptOptions, TemplateBank};
use taskroute::task::TaskKind;

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "image_gen".into());
    let Some(task) = TaskKind::from_token_name(&name) else {
        eprintln!("unknown task `{name}`");
        std::process::exit(1);
    };
    let bank = TemplateBank::shipped();
    let full = build_llm_prompt(task, &bank, &PromptOptions::default()).unwrap();
    println!("{full}");

    let lean = PromptOptions { examples: false, ..PromptOptions::default() };
    let short = build_llm_prompt(task, &bank, &lean).unwrap();
    println!("--- without examples: {} -> {} chars", full.len(), short.len());
}
