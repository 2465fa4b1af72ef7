//! Scripted single-threaded HTTP endpoint for recorder tests.

#![allow(dead_code)]

pub mod instances;
pub mod reference;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use percent_encoding::percent_decode_str;

pub struct Reply {
    pub status: u16,
    pub content_type: &'static str,
    pub body: String,
}

impl Reply {
    pub fn ok(content_type: &'static str, body: impl Into<String>) -> Self {
        Reply {
            status: 200,
            content_type,
            body: body.into(),
        }
    }

    pub fn status(status: u16) -> Self {
        Reply {
            status,
            content_type: "text/plain",
            body: "scripted failure".to_owned(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Seen {
    pub method: String,
    pub query: String,
    pub accept: String,
    pub arrived: Instant,
    pub answered: Instant,
}

pub struct MockEndpoint {
    pub url: String,
    pub seen: Arc<Mutex<Vec<Seen>>>,
    _handle: JoinHandle<()>,
}

type Script = dyn FnMut(usize, &str) -> Reply + Send;

impl MockEndpoint {
    /// `script(n, query)` answers the `n`-th request (0-based).
    pub fn start<F>(script: F) -> Self
    where
        F: FnMut(usize, &str) -> Reply + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let url = format!("http://{}/sparql", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        let mut script: Box<Script> = Box::new(script);
        let handle = thread::spawn(move || {
            for (n, stream) in listener.incoming().enumerate() {
                let Ok(stream) = stream else { break };
                if serve(stream, n, &mut script, &log).is_err() {
                    continue;
                }
            }
        });
        MockEndpoint {
            url,
            seen,
            _handle: handle,
        }
    }

    pub fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn decode_form(s: &str) -> String {
    for pair in s.split('&') {
        if let Some(v) = pair.strip_prefix("query=") {
            return percent_decode_str(&v.replace('+', " "))
                .decode_utf8_lossy()
                .into_owned();
        }
    }
    String::new()
}

fn serve(
    stream: TcpStream,
    n: usize,
    script: &mut Box<Script>,
    log: &Mutex<Vec<Seen>>,
) -> std::io::Result<()> {
    let arrived = Instant::now();
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_owned();
    let target = parts.next().unwrap_or_default().to_owned();
    let mut content_length = 0usize;
    let mut accept = String::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = v.trim().parse().unwrap_or(0),
                "accept" => accept = v.trim().to_owned(),
                _ => {}
            }
        }
    }
    let query = if method == "POST" {
        let mut body = vec![0; content_length];
        reader.read_exact(&mut body)?;
        decode_form(&String::from_utf8_lossy(&body))
    } else {
        target.split_once('?').map(|(_, q)| decode_form(q)).unwrap_or_default()
    };
    let reply = script(n, &query);
    let answered = Instant::now();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} X\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.content_type,
        reply.body.len(),
        reply.body
    )?;
    stream.flush()?;
    log.lock().unwrap().push(Seen {
        method,
        query,
        accept,
        arrived,
        answered,
    });
    Ok(())
}

pub const JSON: &str = "application/sparql-results+json";

/// SPARQL JSON results with one `?x` IRI binding per row.
pub fn select_json(rows: &[&str]) -> String {
    let bindings: Vec<String> = rows
        .iter()
        .map(|r| format!(r#"{{"x":{{"type":"uri","value":"http://ex.org/{r}"}}}}"#))
        .collect();
    format!(
        r#"{{"head":{{"vars":["x"]}},"results":{{"bindings":[{}]}}}}"#,
        bindings.join(",")
    )
}
