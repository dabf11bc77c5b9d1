//! The command-line front end, driven in-process.

mod common;

use std::path::Path;

use common::http::{MockServer, Reply};
use taskroute::cli::{run_cli, EXIT_CONTROLLER, EXIT_DATA, EXIT_OK, EXIT_PIPELINE, EXIT_USAGE};
use taskroute::controller::API_KEY_ENV;

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run_with_stdin(args: &[&str], stdin: &str) -> Run {
    let mut full = vec!["taskroute"];
    full.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_cli(full, &mut stdin.as_bytes(), &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn run(args: &[&str]) -> Run {
    run_with_stdin(args, "")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn route_prints_the_response() {
    let r = run(&["route", "Please craft an image displaying a chihuahua dog dressed in a vibrant, multicolored costume."]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_eq!(r.out.trim(), "<image_gen>a chihuahua dog dressed in a vibrant, multicolored costume.</image_gen>");

    let r = run(&["--json", "route", "Estimate the depth of the old harbor"]);
    let doc: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert!(doc["raw"].as_str().unwrap().starts_with("<depth_est>"));

    let r = run(&["route", "--explain", "What is the capital of France?"]);
    assert_eq!(r.code, EXIT_OK);
    assert!(r.out.contains("direct answer"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--bogus"]).code, EXIT_USAGE);
    assert_eq!(run(&["route"]).code, EXIT_USAGE);
    assert_eq!(run(&["prompt", "not_a_task"]).code, EXIT_USAGE);
    assert_eq!(run(&["synth", "--scale", "-1"]).code, EXIT_USAGE);
    assert_eq!(run(&["route", ""]).code, EXIT_CONTROLLER);
    assert_eq!(run(&["--no-direct-answer", "route", "What is the capital of France?"]).code, EXIT_CONTROLLER);
    assert_eq!(run(&["--controller", "remote", "route", "hi"]).code, EXIT_USAGE);
    assert_eq!(run(&["stats", "/definitely/not/here.jsonl"]).code, EXIT_DATA);
    assert_eq!(run(&["--registry", "/definitely/not/here.toml", "run", "draw a cat"]).code, EXIT_DATA);
    let help = run(&["--help"]);
    assert_eq!(help.code, EXIT_OK);
    assert!(help.out.contains("route"));
}

#[test]
fn run_executes_over_stubs() {
    let r = run(&[
        "run",
        "Could you generate an image of a majestic castle from the pose map? Then edit it by adding green trees.",
        "--attach",
        "map=stub://pose1",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}{}", r.out, r.err);
    assert!(r.out.contains("pose_to_image") && r.out.contains("image_edit"), "{}", r.out);

    let r = run(&["--json", "run", "Please edit this photo by adding a hat to the dog"]);
    assert_eq!(r.code, EXIT_PIPELINE, "{}", r.out);
    assert!(r.err.contains("image"), "{}", r.err);
}

#[test]
fn synth_stats_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("bench.jsonl");
    let r = run(&["synth", "--split", "bench", "--scale", "0.02", "--tasks", "image_gen,obj_det,depth_est", "--out", path_str(&corpus)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);

    let r = run(&["--json", "stats", path_str(&corpus)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let doc: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert!(doc["total"].as_u64().unwrap() > 100);

    let r = run(&["--controller", "replay", "--json", "eval", path_str(&corpus), "--workers", "2"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let doc: serde_json::Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(doc["single"]["accuracy"], 1.0);
    assert_eq!(doc["chain"]["edit_distance"], 0.0);

    let r = run(&["eval", path_str(&corpus)]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("Chain-of-action"));
}

#[test]
fn tokens_and_prompt() {
    let r = run(&["tokens"]);
    let lines: Vec<&str> = r.out.lines().collect();
    assert_eq!(lines.len(), 31);
    assert_eq!(lines[0], "family\tcondition\ttoken\topen\tclose");
    assert!(lines.contains(&"Text3D\t-\t3D_gen_text\t<3D_gen_text>\t</3D_gen_text>"));

    let full = run(&["prompt", "depth_est"]);
    let bare = run(&["prompt", "depth_est", "--no-examples", "--no-prefixes"]);
    assert_eq!(full.code, EXIT_OK);
    assert!(full.out.contains("## Examples") && !bare.out.contains("## Examples"));
    assert!(bare.out.len() < full.out.len());
}

#[test]
fn sweep_prints_a_table() {
    let r = run(&["sweep", "--sizes", "5,20", "--drop-rules", "0.1", "--scale", "0.005"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let lines: Vec<&str> = r.out.lines().filter(|l| l.contains('|')).collect();
    assert_eq!(lines.len(), 3, "{}", r.out);
    assert!(lines[0].contains("Recall"));
}

#[test]
fn config_file_and_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("taskroute.toml");
    std::fs::write(&cfg, "max_chain_length = 1\nformat = \"json\"\n").unwrap();
    let r = run(&["--config", path_str(&cfg), "route", "Generate an image of a cat. Then estimate its depth map."]);
    assert_eq!(r.code, EXIT_CONTROLLER, "{}", r.out);

    std::fs::write(&cfg, "no_such_key = 3\n").unwrap();
    assert_eq!(run(&["--config", path_str(&cfg), "tokens"]).code, EXIT_USAGE);
}

#[test]
fn remote_controller_through_cli() {
    let server = MockServer::start(vec![Reply::ok(r#"{"text":"<video_gen>a fox running through snow</video_gen>"}"#)]);
    std::env::set_var(API_KEY_ENV, "cli-secret");
    let r = run(&["--controller", "remote", "--endpoint", &server.url, "run", "make a video of a fox"]);
    std::env::remove_var(API_KEY_ENV);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("video_gen"), "{}", r.out);
    assert_eq!(server.captured()[0].header("authorization"), Some("Bearer cli-secret"));
}

#[test]
fn repl_session() {
    let script = ":help\nPlease generate an image of a lighthouse at dusk\n:attach image=file:///in.png\nPlease remove the rain from this photo\n:clear\n:quit\n";
    let r = run_with_stdin(&["repl"], script);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(r.out.contains("image_gen"), "{}", r.out);
    assert!(r.out.contains("image_derain"), "{}", r.out);
}
