//! Drive the remote controller adapter against a loopback server that
//! answers every request with a canned routed response.
//!
//! Set TASKROUTE_CONTROLLER_KEY to send a bearer credential.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

use taskroute::controller::{ControllerRequest, EndpointConfig, RemoteController};

fn serve_once(listener: &TcpListener, text: &str) {
    let (stream, _) = listener.accept().unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0;
    let mut line = String::new();
    while reader.read_line(&mut line).unwrap() > 2 {
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            len = v.trim().parse().unwrap();
        }
        line.clear();
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    println!("server got: {}", String::from_utf8_lossy(&body));

    let reply = serde_json::json!({ "text": text }).to_string();
    let mut stream = stream;
    write!(stream, "HTTP/1.1 200 OK\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}", reply.len()).unwrap();
}

fn main() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/route", listener.local_addr().unwrap());
    let server = std::thread::spawn(move || {
        serve_once(&listener, "<video_gen>a fox running through fresh snow</video_gen>");
    });

    let controller = RemoteController::new(EndpointConfig::new(url).with_env_credential());
    let outcome = controller.route_detailed(&ControllerRequest::new("Make a short video of a fox in the snow")).unwrap();
    server.join().unwrap();
    println!("retries: {}", outcome.retries);
    println!("tasks: {:?}", outcome.response.tasks().iter().map(|t| t.token_name()).collect::<Vec<_>>());
}
