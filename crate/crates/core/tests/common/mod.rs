//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use taskroute::grammar::{find_known_tag, RoutedResponse, RoutingStep, Segment};
use taskroute::task::TaskKind;
use rand::seq::SliceRandom;
use rand::Rng;

const WORDS: &[&str] = &[
    "a", "cat", "castle", "<", ">", "</", "<b>", "</i>", "<unknown_tag>", "é", "日本", "  ", "\n", "x<y", "tags>",
    "<image_gen", "image_gen>", "</image_gen", "{}", "\"quoted\"",
];

/// Random text with no complete routing tag in it.
fn random_text<R: Rng>(rng: &mut R, min_words: usize) -> String {
    loop {
        let n = rng.gen_range(min_words..=6);
        let sep = if rng.gen() { " " } else { "" };
        let text = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(sep);
        if find_known_tag(&text).is_none() {
            return text;
        }
    }
}

/// A random valid response: interleaved text and steps, with prompts that
/// contain no complete routing tag.
pub fn random_response<R: Rng>(rng: &mut R) -> RoutedResponse {
    loop {
        let r = draw_response(rng);
        // Merging adjacent text runs can complete a tag across the seam.
        let clean = r.segments().iter().all(|s| match s {
            Segment::Text { text } => find_known_tag(text).is_none(),
            Segment::Step(_) => true,
        });
        if clean {
            return r;
        }
    }
}

fn draw_response<R: Rng>(rng: &mut R) -> RoutedResponse {
    let tasks: Vec<TaskKind> = TaskKind::all().collect();
    let mut segments = Vec::new();
    for _ in 0..rng.gen_range(0..=6) {
        if rng.gen_bool(0.4) {
            segments.push(Segment::Text { text: random_text(rng, 0) });
        } else {
            let prompt = random_text(rng, 1);
            segments.push(Segment::Step(RoutingStep::new(*tasks.choose(rng).unwrap(), prompt)));
        }
    }
    RoutedResponse::from_segments(segments)
}

/// Plain recursive edit distance with no memo table.
pub fn levenshtein_oracle<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    match (a, b) {
        ([], _) => b.len(),
        (_, []) => a.len(),
        ([x, ra @ ..], [y, rb @ ..]) => {
            if x == y {
                levenshtein_oracle(ra, rb)
            } else {
                1 + levenshtein_oracle(ra, b).min(levenshtein_oracle(a, rb)).min(levenshtein_oracle(ra, rb))
            }
        }
    }
}

pub struct Weighted {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class brute force over (gold, predicted) label pairs, `None` meaning
/// a rejected prediction. Weighted by gold support.
pub fn weighted_oracle<L: PartialEq + Copy>(pairs: &[(L, Option<L>)]) -> Weighted {
    let mut classes: Vec<L> = Vec::new();
    for (g, _) in pairs {
        if !classes.contains(g) {
            classes.push(*g);
        }
    }
    let n = pairs.len() as f64;
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for c in &classes {
        let tp = pairs.iter().filter(|(g, pr)| g == c && *pr == Some(*c)).count() as f64;
        let predicted = pairs.iter().filter(|(_, pr)| *pr == Some(*c)).count() as f64;
        let support = pairs.iter().filter(|(g, _)| g == c).count() as f64;
        let pc = if predicted == 0.0 { 0.0 } else { tp / predicted };
        let rc = tp / support;
        let fc = if pc + rc == 0.0 { 0.0 } else { 2.0 * pc * rc / (pc + rc) };
        p += pc * support / n;
        r += rc * support / n;
        f += fc * support / n;
    }
    let correct = pairs.iter().filter(|(g, pr)| Some(*g) == *pr).count() as f64;
    Weighted { accuracy: correct / n, precision: p, recall: r, f1: f }
}

/// A registry with stubs everywhere except the given `(token, backend toml)`
/// overrides.
pub fn registry_with(overrides: &[(&str, String)]) -> taskroute::registry::Registry {
    let mut doc = String::new();
    for t in TaskKind::all() {
        let name = t.token_name();
        let backend = overrides
            .iter()
            .find(|(tok, _)| *tok == name)
            .map(|(_, b)| b.clone())
            .unwrap_or_else(|| "backend = \"stub\"".into());
        doc.push_str(&format!("[[specialist]]\ntoken = \"{name}\"\nmodel = \"test-{name}\"\n{backend}\n\n"));
    }
    taskroute::registry::Registry::from_toml(&doc).expect("test registry is valid")
}

pub mod http {
    //! Loopback HTTP/1.1 server replaying scripted replies, one per connection.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread;
    use std::time::Duration;

    #[derive(Debug, Clone)]
    pub struct Reply {
        pub delay: Duration,
        pub status: u16,
        pub body: String,
    }

    impl Reply {
        pub fn ok(body: impl Into<String>) -> Reply {
            Reply { delay: Duration::ZERO, status: 200, body: body.into() }
        }

        pub fn status(status: u16, body: impl Into<String>) -> Reply {
            Reply { delay: Duration::ZERO, status, body: body.into() }
        }

        pub fn slow(delay: Duration) -> Reply {
            Reply { delay, status: 200, body: "{}".into() }
        }
    }

    #[derive(Debug, Clone, Default)]
    pub struct Captured {
        pub headers: Vec<(String, String)>,
        pub body: String,
    }

    impl Captured {
        pub fn header(&self, name: &str) -> Option<&str> {
            self.headers.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
        }
    }

    pub struct MockServer {
        pub url: String,
        pub requests: Arc<Mutex<Vec<Captured>>>,
    }

    impl MockServer {
        /// Serve `script` in order; connections beyond it get the last reply.
        pub fn start(script: Vec<Reply>) -> MockServer {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let url = format!("http://{}/route", listener.local_addr().unwrap());
            let requests = Arc::new(Mutex::new(Vec::new()));
            let log = Arc::clone(&requests);
            thread::spawn(move || {
                for (i, stream) in listener.incoming().enumerate() {
                    let Ok(stream) = stream else { continue };
                    let reply = script.get(i).or(script.last()).cloned().unwrap();
                    let log = Arc::clone(&log);
                    thread::spawn(move || serve(stream, reply, log));
                }
            });
            MockServer { url, requests }
        }

        pub fn captured(&self) -> Vec<Captured> {
            self.requests.lock().unwrap().clone()
        }
    }

    fn serve(stream: std::net::TcpStream, reply: Reply, log: Arc<Mutex<Vec<Captured>>>) {
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut captured = Captured::default();
        let mut line = String::new();
        reader.read_line(&mut line).ok();
        loop {
            line.clear();
            if reader.read_line(&mut line).unwrap_or(0) == 0 || line.trim().is_empty() {
                break;
            }
            if let Some((n, v)) = line.trim_end().split_once(':') {
                captured.headers.push((n.trim().to_string(), v.trim().to_string()));
            }
        }
        let len = captured.header("content-length").and_then(|v| v.parse().ok()).unwrap_or(0);
        let mut body = vec![0; len];
        reader.read_exact(&mut body).ok();
        captured.body = String::from_utf8_lossy(&body).into_owned();
        log.lock().unwrap().push(captured);

        thread::sleep(reply.delay);
        let mut stream = stream;
        let head = format!(
            "HTTP/1.1 {} Scripted\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
            reply.status,
            reply.body.len()
        );
        let _ = stream.write_all(head.as_bytes()).and_then(|_| stream.write_all(reply.body.as_bytes()));
    }
}
