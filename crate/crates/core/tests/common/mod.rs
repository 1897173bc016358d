#![allow(dead_code)]

use chartguide::modelclient::MockModel;
use chartguide::service::{router, Service, Store};
use chartguide::synth::{generate_corpus, CorpusEntry};
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::thread::JoinHandle;

pub const SEED: u64 = 42;

pub fn corpus() -> &'static [CorpusEntry] {
    static CORPUS: OnceLock<Vec<CorpusEntry>> = OnceLock::new();
    CORPUS.get_or_init(|| generate_corpus(SEED).expect("bundled corpus renders"))
}

pub fn entry(chart_id: &str) -> &'static CorpusEntry {
    corpus().iter().find(|e| e.data.chart_id == chart_id).expect("chart in corpus")
}

pub fn mock() -> MockModel {
    MockModel::new(corpus().iter().map(|e| e.truth.clone()))
}

/// A service instance on an ephemeral port over `store`.
pub struct Server {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(store: &Path) -> Server {
        let svc = Arc::new(Service::new(Store::open(store).unwrap(), Arc::new(mock())));
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, router(svc, None))
                    .with_graceful_shutdown(async {
                        let _ = stopped.await;
                    })
                    .await
                    .unwrap();
            });
        });
        Server { addr: addr_rx.recv().unwrap(), stop: Some(stop), thread: Some(thread) }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            t.join().unwrap();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Minimal blocking HTTP client that records every status it sees.
pub struct Client {
    agent: ureq::Agent,
    pub statuses: Vec<(String, u16)>,
}

pub struct Reply {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or(serde_json::Value::Null)
    }
}

impl Client {
    pub fn new() -> Client {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Client { agent, statuses: Vec::new() }
    }

    fn finish(&mut self, what: String, resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Reply {
        let mut resp = resp.unwrap_or_else(|e| panic!("{what}: {e}"));
        let status = resp.status().as_u16();
        let body = resp.body_mut().with_config().limit(64 << 20).read_to_vec().unwrap();
        self.statuses.push((what, status));
        Reply { status, body }
    }

    pub fn get(&mut self, url: &str) -> Reply {
        let r = self.agent.get(url).call();
        self.finish(format!("GET {url}"), r)
    }

    pub fn post(&mut self, url: &str, content_type: &str, body: &[u8]) -> Reply {
        let r = self.agent.post(url).header("Content-Type", content_type).send(body);
        self.finish(format!("POST {url}"), r)
    }

    pub fn patch(&mut self, url: &str, body: &str) -> Reply {
        let r = self.agent.patch(url).header("Content-Type", "application/json").send(body);
        self.finish(format!("PATCH {url}"), r)
    }

    pub fn server_errors(&self) -> Vec<&(String, u16)> {
        self.statuses.iter().filter(|(_, s)| *s >= 500).collect()
    }
}
