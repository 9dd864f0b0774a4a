mod common;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use madpfi_core::corpus::{
    fetch_snapshots, load_corpus, load_corpus_with_report, write_corpus, FetchConfig, Source,
};
use madpfi_core::{Error, ErrorKind};

use common::*;

fn lines_of(corpus: &madpfi_core::corpus::Corpus) -> Vec<String> {
    corpus.snapshots().map(|s| s.to_record()).collect()
}

#[test]
fn load_is_independent_of_file_layout_and_order() {
    let corpus = random_corpus(5, 6, 8, 12);
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(&corpus, tmp.path().join("a")).unwrap();

    // same records, reversed and split across nested files by day parity
    let mut lines = lines_of(&corpus);
    lines.reverse();
    let b = tmp.path().join("b");
    fs::create_dir_all(b.join("nested")).unwrap();
    let (even, odd): (Vec<_>, Vec<_>) = lines.iter().enumerate().partition(|(i, _)| i % 2 == 0);
    let join = |v: Vec<(usize, &String)>| v.into_iter().map(|(_, l)| format!("{l}\n")).collect::<String>();
    fs::write(b.join("z.jsonl"), join(even)).unwrap();
    fs::write(b.join("nested/a.jsonl"), format!("\n{}", join(odd))).unwrap();
    fs::write(b.join("notes.txt"), "ignored").unwrap();

    let single = tmp.path().join("all.jsonl");
    fs::write(&single, lines.join("\n")).unwrap();

    let from_a = load_corpus(tmp.path().join("a")).unwrap();
    assert_eq!(from_a, corpus);
    assert_eq!(load_corpus(&b).unwrap(), corpus);
    assert_eq!(load_corpus(&single).unwrap(), corpus);
}

#[test]
fn malformed_line_names_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let good = snapshot("EG", day0(), &[("a", &[])]).to_record();
    let file = tmp.path().join("EG.jsonl");
    fs::write(&file, format!("{good}\n{{\"country\": \"EG\", \"date\": 5}}\n")).unwrap();
    let err = load_corpus(tmp.path()).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Validation);
    match err {
        Error::Parse { file: f, line, .. } => {
            assert!(f.ends_with("EG.jsonl"));
            assert_eq!(line, 2);
        }
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn empty_directory_and_missing_path() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(load_corpus(tmp.path()), Err(Error::EmptyCorpus(_))));
    let err = load_corpus(tmp.path().join("missing")).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Io);
}

#[test]
fn duplicates_and_unknown_codes_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let first = snapshot("EG", day0(), &[("old", &[])]).to_record();
    let second = snapshot("EG", day0(), &[("new", &[])]).to_record();
    let other = snapshot("XK", day0(), &[("x", &[])]).to_record();
    fs::write(tmp.path().join("1.jsonl"), format!("{first}\n{other}\n")).unwrap();
    fs::write(tmp.path().join("2.jsonl"), format!("{second}\n")).unwrap();
    let (corpus, report) = load_corpus_with_report(tmp.path()).unwrap();
    assert_eq!(report.duplicates, 1);
    assert_eq!(report.unknown_countries, vec!["XK".to_string()]);
    let eg = corpus.get(&madpfi_core::corpus::CountryCode::new("EG").unwrap(), day0()).unwrap();
    assert_eq!(eg.mentions()[0].topic.as_str(), "new");
}

#[test]
fn local_fetch_is_idempotent() {
    let corpus = random_corpus(9, 4, 5, 6);
    let tmp = tempfile::tempdir().unwrap();
    write_corpus(&corpus, tmp.path().join("src")).unwrap();
    let out = tmp.path().join("out");
    let source = Source::parse(tmp.path().join("src").to_str().unwrap());
    let config = FetchConfig::new(Duration::ZERO);
    let first = fetch_snapshots(&source, &config, &out).unwrap();
    assert_eq!(first.fetched, corpus.snapshot_count());
    let second = fetch_snapshots(&source, &config, &out).unwrap();
    assert_eq!((second.fetched, second.skipped), (0, corpus.snapshot_count()));
    assert_eq!(load_corpus(&out).unwrap(), corpus);
}

/// Minimal HTTP/1.1 server: one request per connection, records the path
/// and arrival time of each request.
struct StubServer {
    base: String,
    log: Arc<Mutex<Vec<(String, Instant)>>>,
}

fn serve(corpus: &madpfi_core::corpus::Corpus, failing: &'static str) -> StubServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let index: Vec<serde_json::Value> = corpus
        .snapshots()
        .map(|s| serde_json::json!({"country": s.country().as_str(), "date": s.date().to_string()}))
        .collect();
    let index = serde_json::to_string(&index).unwrap();
    let records: std::collections::HashMap<String, String> = corpus
        .snapshots()
        .map(|s| (format!("/snapshots/{}/{}.jsonl", s.country(), s.date()), s.to_record()))
        .collect();
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = log.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            if reader.read_line(&mut request_line).is_err() {
                continue;
            }
            let mut header = String::new();
            while reader.read_line(&mut header).is_ok_and(|n| n > 2) {
                header.clear();
            }
            let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
            seen.lock().unwrap().push((path.clone(), Instant::now()));
            let (status, body) = if path == "/index.json" {
                ("200 OK", index.clone())
            } else if path.contains(&format!("/{failing}/")) {
                ("500 Internal Server Error", "boom".to_string())
            } else if let Some(r) = records.get(&path) {
                ("200 OK", r.clone())
            } else {
                ("404 Not Found", String::new())
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.flush();
            let mut rest = Vec::new();
            let _ = stream.set_read_timeout(Some(Duration::from_millis(1)));
            let _ = reader.read_to_end(&mut rest);
        }
    });
    StubServer { base, log }
}

#[test]
fn http_fetch_survives_server_errors_and_spaces_requests() {
    let snaps = vec![
        snapshot("EG", day0(), &[("a", &["b"])]),
        snapshot("EG", day0() + chrono::Duration::days(1), &[("c", &[])]),
        snapshot("FR", day0(), &[("a", &[])]),
        snapshot("YE", day0(), &[("d", &[])]),
    ];
    let corpus = madpfi_core::corpus::Corpus::from_snapshots(snaps).0;
    let server = serve(&corpus, "YE");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("snapshots");
    let gap = Duration::from_millis(60);
    let mut config = FetchConfig::new(gap);
    config.attempts = 2;
    config.backoff = Duration::from_millis(5);

    let summary = fetch_snapshots(&Source::parse(&server.base), &config, &out).unwrap();
    assert_eq!(summary.fetched, 3);
    assert_eq!(summary.failed, 1);
    assert!(summary.failures[0].contains("YE"));
    let loaded = load_corpus(&out).unwrap();
    assert_eq!(loaded.country_count(), 2);

    let log = server.log.lock().unwrap().clone();
    // index + 3 successes + 2 attempts at the failing country
    assert_eq!(log.len(), 6);
    for pair in log.windows(2) {
        let spacing = pair[1].1 - pair[0].1;
        assert!(spacing >= gap - Duration::from_millis(5), "requests {spacing:?} apart");
    }

    let again = fetch_snapshots(&Source::parse(&server.base), &config, &out).unwrap();
    assert_eq!((again.fetched, again.skipped, again.failed), (0, 3, 1));
    let total = server.log.lock().unwrap().len();
    // only the index and the failing snapshot are requested again
    assert_eq!(total, 6 + 3);
}

#[test]
fn remote_fetch_requires_rate_limit() {
    let tmp = tempfile::tempdir().unwrap();
    let err = fetch_snapshots(
        &Source::parse("http://127.0.0.1:9"),
        &FetchConfig::new(Duration::ZERO),
        tmp.path(),
    )
    .unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Validation);
}

#[test]
fn unreachable_index_is_an_io_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let tmp = tempfile::tempdir().unwrap();
    let mut config = FetchConfig::new(Duration::from_millis(1));
    config.attempts = 1;
    let err = fetch_snapshots(&Source::parse(&format!("http://{addr}")), &config, tmp.path()).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Io);
}
