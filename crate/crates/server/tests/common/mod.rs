#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use mg_server::keyserver::delivery::CaptureDelivery;
use mg_server::{BackgroundServer, KeyServer, KeyServerClient, KeyServerConfig};

pub struct TestKeyServer {
    pub server: KeyServer,
    pub inbox: CaptureDelivery,
    pub http: BackgroundServer,
}

pub fn config(inbox: &CaptureDelivery) -> KeyServerConfig {
    let mut config = KeyServerConfig::in_memory(Arc::new(inbox.clone()));
    config.password_iterations = 1_000;
    config
}

pub fn start_with(config: KeyServerConfig, inbox: CaptureDelivery) -> TestKeyServer {
    let server = KeyServer::open(config).expect("key server opens");
    let s = server.clone();
    let http = BackgroundServer::start(0, move |_| s.router()).expect("bind");
    TestKeyServer { server, inbox, http }
}

pub fn start() -> TestKeyServer {
    let inbox = CaptureDelivery::new();
    start_with(config(&inbox), inbox)
}

pub fn start_with_ttl(proof_ttl: Duration) -> TestKeyServer {
    let inbox = CaptureDelivery::new();
    let mut c = config(&inbox);
    c.proof_ttl = proof_ttl;
    start_with(c, inbox)
}

impl TestKeyServer {
    pub fn client(&self) -> KeyServerClient {
        KeyServerClient::new(&self.http.url)
    }

    pub fn account(&self, username: &str) -> KeyServerClient {
        let mut c = self.client();
        c.create_account(username, "correct horse").unwrap();
        c.login(username, "correct horse").unwrap();
        c
    }

    pub fn claim(&self, client: &KeyServerClient, identity: &str) -> mg_core::Result<()> {
        let started = client.start_proof(identity)?;
        let code = self.inbox.latest(&started.identity).expect("code delivered").code;
        client.complete_proof(identity, &started.proof_id, &code).map(|_| ())
    }
}

pub fn http() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}
