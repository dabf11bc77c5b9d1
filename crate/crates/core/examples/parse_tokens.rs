//! Parse controller output into routing steps and render it back.

use taskroute::grammar::{parse_response, render_response};
use taskroute::task::token_table;

fn main() {
    let raw = "Sure. <pose_to_image>a majestic castle</pose_to_image><image_edit>adding green trees</image_edit>";
    let resp = parse_response(raw).expect("well-formed response");
    for (i, step) in resp.steps().enumerate() {
        println!("step {i}: {:<16} {:?}", step.task.token_name(), step.refined_prompt);
    }
    println!("text: {:?}", resp.plain_text());
    assert_eq!(render_response(&resp).unwrap(), raw);

    match parse_response("<image_gen>a cat") {
        Ok(_) => unreachable!(),
        Err(e) => println!("rejected: {e}"),
    }

    println!("{} routing tokens, e.g. {}", token_table().len(), token_table()[4].open_tag());
}
