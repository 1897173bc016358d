//! Only the model client talks to the network; only the service listens.

use std::path::{Path, PathBuf};

fn sources(dir: &Path, out: &mut Vec<PathBuf>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            sources(&p, out);
        } else if p.extension().is_some_and(|x| x == "rs") {
            out.push(p);
        }
    }
}

fn offenders(patterns: &[&str], allowed: &[&str]) -> Vec<String> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("src");
    let mut files = Vec::new();
    sources(&root, &mut files);
    let mut bad = Vec::new();
    for f in files {
        let rel = f.strip_prefix(&root).unwrap().to_string_lossy().replace('\\', "/");
        if allowed.iter().any(|a| rel.starts_with(a)) {
            continue;
        }
        let text = std::fs::read_to_string(&f).unwrap();
        for (n, line) in text.lines().enumerate() {
            if patterns.iter().any(|p| line.contains(p)) {
                bad.push(format!("{rel}:{}: {}", n + 1, line.trim()));
            }
        }
    }
    bad
}

#[test]
fn outbound_network_only_in_modelclient() {
    let bad = offenders(&["ureq", "TcpStream", "UdpSocket", "reqwest", "hyper::client"], &["modelclient/"]);
    assert!(bad.is_empty(), "network client use outside modelclient:\n{}", bad.join("\n"));
}

#[test]
fn listening_sockets_only_in_service() {
    let bad = offenders(&["TcpListener", "axum::serve"], &["service/", "modelclient/remote.rs"]);
    assert!(bad.is_empty(), "listening sockets outside the service:\n{}", bad.join("\n"));
}

#[test]
fn manifest_client_dependency_is_the_only_http_client() {
    let manifest = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("Cargo.toml")).unwrap();
    for client in ["reqwest", "hyper-util", "isahc", "surf", "attohttpc"] {
        assert!(!manifest.contains(&format!("\n{client} ")), "unexpected HTTP client {client}");
    }
}
