//! Plan and execute a three-step chain over the stub registry.

use taskroute::executor::{execute, plan, ExecOptions, DEFAULT_MAX_CHAIN_LENGTH};
use taskroute::grammar::parse_response;
use taskroute::registry::Registry;

fn main() {
    let resp = parse_response(
        "<image_gen>a red vintage car on a coastal road</image_gen>\
         <obj_seg>the car</obj_seg>\
         <3D_gen_image>the car</3D_gen_image>",
    )
    .unwrap();
    let plan = plan(&resp, &[], DEFAULT_MAX_CHAIN_LENGTH).expect("inputs are satisfiable");
    for (i, step) in plan.steps.iter().enumerate() {
        let bindings: Vec<String> = step.input_bindings.iter().map(ToString::to_string).collect();
        println!("plan {i}: {} <- [{}]", step.task.token_name(), bindings.join(", "));
    }

    let report = execute(&plan, &Registry::shipped(), &ExecOptions::default());
    println!("{report}");
    print!("{}", report.without_timings().to_jsonl());
}
