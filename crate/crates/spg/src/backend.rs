//! Optional plain-text completion backend.
//!
//! When the `SPG_BACKEND_URL` environment variable points at an HTTP
//! endpoint, prompts are POSTed as plain text and the response body is
//! returned as the completion. Every failure mode (unset variable, bad URL,
//! connection refused, non-200 status) degrades to `None`; the deterministic
//! offline path never depends on this module succeeding.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::Duration;

pub const BACKEND_ENV_VAR: &str = "SPG_BACKEND_URL";

const TIMEOUT: Duration = Duration::from_secs(10);

/// The configured backend endpoint, if any.
pub fn backend_url() -> Option<String> {
    std::env::var(BACKEND_ENV_VAR).ok().filter(|s| !s.is_empty())
}

/// POSTs `prompt` to the configured endpoint; `None` when unconfigured or on
/// any transport failure.
pub fn complete(prompt: &str) -> Option<String> {
    request_completion(&backend_url()?, prompt)
}

/// POSTs `prompt` to `url` (http only) and returns the response body on a
/// 200 status.
pub fn request_completion(url: &str, prompt: &str) -> Option<String> {
    let rest = url.strip_prefix("http://")?;
    let (authority, path) = match rest.find('/') {
        Some(i) => (&rest[..i], &rest[i..]),
        None => (rest, "/"),
    };
    let address = if authority.contains(':') {
        authority.to_string()
    } else {
        format!("{authority}:80")
    };

    let stream = TcpStream::connect(&address).ok()?;
    stream.set_read_timeout(Some(TIMEOUT)).ok()?;
    stream.set_write_timeout(Some(TIMEOUT)).ok()?;
    let mut stream = stream;
    let request = format!(
        "POST {path} HTTP/1.1\r\nHost: {authority}\r\nContent-Type: text/plain\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{prompt}",
        prompt.len()
    );
    stream.write_all(request.as_bytes()).ok()?;

    let mut response = Vec::new();
    stream.read_to_end(&mut response).ok()?;
    let response = String::from_utf8_lossy(&response).into_owned();
    let (head, body) = response.split_once("\r\n\r\n")?;
    let status = head.split_whitespace().nth(1)?;
    if status != "200" {
        return None;
    }
    Some(body.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malformed_url_is_none() {
        assert_eq!(request_completion("ftp://nowhere", "x"), None);
        assert_eq!(request_completion("nowhere", "x"), None);
    }

    #[test]
    fn unreachable_endpoint_is_none() {
        // Reserved port 0 can never be connected to.
        assert_eq!(request_completion("http://127.0.0.1:0/v1", "x"), None);
    }

    #[test]
    fn round_trip_against_local_server() {
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let n = sock.read(&mut buf).unwrap();
            let req = String::from_utf8_lossy(&buf[..n]).into_owned();
            sock.write_all(b"HTTP/1.1 200 OK\r\nContent-Length: 2\r\nConnection: close\r\n\r\nok")
                .unwrap();
            req
        });
        let url = format!("http://{addr}/complete");
        let reply = request_completion(&url, "hello prompt");
        let req = server.join().unwrap();
        assert_eq!(reply.as_deref(), Some("ok"));
        assert!(req.starts_with("POST /complete HTTP/1.1"));
        assert!(req.ends_with("hello prompt"));
    }
}
