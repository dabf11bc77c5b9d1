//! Route free-form instructions with the keyword rule router.
//!
//!     cargo run --example route_with_rules -- "Estimate the depth of this photo"

use taskroute::controller::{Controller, ControllerRequest, RuleRouter};
use taskroute::grammar::render_response;

fn main() {
    let router = RuleRouter::shipped();
    let mut instructions: Vec<String> = std::env::args().skip(1).collect();
    if instructions.is_empty() {
        instructions = vec![
            "Please craft an image displaying a chihuahua dog dressed in a vibrant, multicolored costume.".into(),
            "Could you generate an image of a majestic castle from the pose map? Then edit it by adding green trees.".into(),
            "What is the capital of France?".into(),
        ];
    }
    for text in instructions {
        match router.route(&ControllerRequest::new(text.as_str())) {
            Ok(resp) => println!("{text}\n  -> {}", render_response(&resp).unwrap()),
            Err(e) => println!("{text}\n  !! {e}"),
        }
    }

    // Without the direct-answer fallback, unmatched text is an error.
    let strict = RuleRouter::shipped().with_direct_answer(false);
    println!("strict: {:?}", strict.route(&ControllerRequest::new("hello there")));
}
