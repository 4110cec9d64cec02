use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use sssir::data::{
    bundled_japan, fetch_dataset, load_csv, FetchOptions, FetchSource, JAPAN_2020_CSV,
};
use sssir::Error;

/// Serves `body` with `content_type` to a single request.
fn serve_once(status: &'static str, content_type: &'static str, body: &'static str) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut line = String::new();
        while reader.read_line(&mut line).unwrap() > 0 {
            if line == "\r\n" {
                break;
            }
            line.clear();
        }
        write!(
            stream,
            "HTTP/1.1 {status}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
        .unwrap();
    });
    format!("http://{addr}/japan.csv")
}

fn options(dir: &tempfile::TempDir) -> FetchOptions {
    FetchOptions {
        cache_dir: Some(dir.path().to_path_buf()),
        timeout: Some(Duration::from_secs(5)),
        ..FetchOptions::default()
    }
}

#[test]
fn served_csv_parses_identically_to_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let url = serve_once("200 OK", "text/csv", JAPAN_2020_CSV);
    let fetched = fetch_dataset(&url, &options(&dir)).unwrap();
    assert_eq!(fetched.source, FetchSource::Downloaded);
    assert!(fetched.path.starts_with(dir.path()));
    assert_eq!(load_csv(&fetched.path).unwrap(), bundled_japan());
}

#[test]
fn unreachable_host_falls_back_to_bundle() {
    let dir = tempfile::tempdir().unwrap();
    // Bind then drop to get a port nobody is listening on.
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let url = format!("http://127.0.0.1:{port}/missing.csv");
    let fetched = fetch_dataset(&url, &options(&dir)).unwrap();
    assert!(matches!(fetched.source, FetchSource::Bundled(_)));
    assert_eq!(load_csv(&fetched.path).unwrap(), bundled_japan());
}

#[test]
fn http_error_status_falls_back() {
    let dir = tempfile::tempdir().unwrap();
    let url = serve_once("404 Not Found", "text/plain", "nope");
    let fetched = fetch_dataset(&url, &options(&dir)).unwrap();
    assert!(matches!(fetched.source, FetchSource::Bundled(_)));
}

#[test]
fn html_payload_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let url = serve_once(
        "200 OK",
        "text/html",
        "<!DOCTYPE html><html><body>rate limited</body></html>",
    );
    assert!(matches!(
        fetch_dataset(&url, &options(&dir)),
        Err(Error::MalformedPayload(_))
    ));
}

#[test]
fn offline_mode_uses_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let opts = FetchOptions {
        offline: true,
        ..options(&dir)
    };
    let fetched = fetch_dataset("http://example.invalid/x.csv", &opts).unwrap();
    assert_eq!(fetched.source, FetchSource::Bundled("offline mode".into()));
}
