//! Scripted chat-completions server on a local socket.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

#[derive(Debug, Clone)]
pub enum Fault {
    /// 200 with a completion carrying this text.
    Reply(String),
    /// Non-2xx status with a short body.
    Status(u16),
    /// Sleep before replying (beyond the client timeout).
    Stall(Duration),
    /// Close the socket without a response.
    Drop,
    /// 200 whose body is not a completion object.
    Garbage,
}

pub struct MockServer {
    pub url: String,
    script: Arc<Mutex<VecDeque<Fault>>>,
    pub requests: Arc<Mutex<Vec<serde_json::Value>>>,
}

impl MockServer {
    pub fn start() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let script: Arc<Mutex<VecDeque<Fault>>> = Arc::default();
        let requests: Arc<Mutex<Vec<serde_json::Value>>> = Arc::default();
        let (s, r) = (script.clone(), requests.clone());
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (s, r) = (s.clone(), r.clone());
                thread::spawn(move || serve(stream, &s, &r));
            }
        });
        Self {
            url,
            script,
            requests,
        }
    }

    pub fn push(&self, faults: impl IntoIterator<Item = Fault>) {
        self.script.lock().unwrap().extend(faults);
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn serve(
    stream: TcpStream,
    script: &Mutex<VecDeque<Fault>>,
    requests: &Mutex<Vec<serde_json::Value>>,
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let t = line.trim_end();
        if t.is_empty() {
            break;
        }
        if let Some((k, v)) = t.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    requests
        .lock()
        .unwrap()
        .push(serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null));
    let fault = script
        .lock()
        .unwrap()
        .pop_front()
        .unwrap_or(Fault::Status(500));
    let mut stream = stream;
    let (status, payload) = match fault {
        Fault::Reply(text) => (
            200,
            serde_json::json!({
                "choices": [{ "index": 0, "message": { "role": "assistant", "content": text } }]
            })
            .to_string(),
        ),
        Fault::Status(code) => (code, "{\"error\":\"scripted\"}".to_string()),
        Fault::Stall(d) => {
            thread::sleep(d);
            (200, "{}".to_string())
        }
        Fault::Drop => return,
        Fault::Garbage => (200, "not json".to_string()),
    };
    let reply = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.write_all(reply.as_bytes());
    let _ = stream.flush();
}
