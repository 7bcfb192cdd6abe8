mod common;

use std::path::Path;
use std::time::Duration;

use common::http;
use mg_core::{resolve_scheme_name, FormValues, Keyring, Keystore, SchemeEnv};
use mg_server::{Agent, AgentConfig, BackgroundServer};
use rand::rngs::OsRng;
use serde_json::{json, Value};

const MASTER: &str = "agent master password";
const SHARED: &str = "shared team secret";

fn make_keystore(path: &Path) -> Keystore {
    let mut store = Keystore::init_with_iterations(path, MASTER, 1_000).unwrap();
    let values: FormValues = [("label", "team"), ("password", SHARED), ("iterations", "1000")]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
    let mut rng = OsRng;
    let system = resolve_scheme_name("password").unwrap().create(&values, &mut SchemeEnv::new(&mut rng)).unwrap();
    store.put(system.serialize()).unwrap();
    store.save().unwrap();
    store
}

struct Fixture {
    dir: tempfile::TempDir,
    server: BackgroundServer,
}

fn start(idle: Duration) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    make_keystore(&dir.path().join("keys.mgks"));
    let mut config = AgentConfig::new(dir.path().join("keys.mgks"), dir.path().join("bench.jsonl"));
    config.session_idle = idle;
    let server = BackgroundServer::start(0, move |url| Agent::new(config, url).unwrap().router()).unwrap();
    Fixture { dir, server }
}

struct Resp {
    status: u16,
    headers: ureq::http::HeaderMap,
    body: String,
}

impl Resp {
    fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or(Value::Null)
    }
}

fn call(mut req: ureq::RequestBuilder<ureq::typestate::WithBody>, headers: &[(&str, &str)], body: Value) -> Resp {
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let mut r = req.send_json(body).unwrap();
    Resp { status: r.status().as_u16(), headers: r.headers().clone(), body: r.body_mut().read_to_string().unwrap() }
}

fn get(url: &str, headers: &[(&str, &str)]) -> Resp {
    let mut req = http().get(url);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let mut r = req.call().unwrap();
    Resp { status: r.status().as_u16(), headers: r.headers().clone(), body: r.body_mut().read_to_string().unwrap() }
}

impl Fixture {
    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.server.url)
    }

    fn post(&self, path: &str, headers: &[(&str, &str)], body: Value) -> Resp {
        call(http().post(&self.url(path)), headers, body)
    }

    fn unlock(&self) -> String {
        let r = self.post("/api/unlock", &[], json!({"master_password": MASTER}));
        assert_eq!(r.status, 200, "{}", r.body);
        r.json()["token"].as_str().unwrap().to_owned()
    }
}

fn bearer(token: &str) -> String {
    format!("Bearer {token}")
}

#[test]
fn package_and_unpackage_through_the_api() {
    let f = start(Duration::from_secs(600));
    let token = f.unlock();
    let auth = bearer(&token);
    let h = [("Authorization", auth.as_str())];

    let plaintext = "<p>meet at the <b>usual</b> place ☕</p>";
    let r = f.post("/api/package", &h, json!({"key_system": "team", "plaintext": plaintext}));
    assert_eq!(r.status, 200, "{}", r.body);
    let armored = r.json()["armored"].as_str().unwrap().to_owned();
    assert!(!armored.contains("usual"));

    let r = f.post("/api/unpackage", &h, json!({"armored": armored}));
    assert_eq!(r.status, 200, "{}", r.body);
    assert_eq!(r.json()["plaintext"], plaintext);
    assert_eq!(r.json()["scheme_id"], "password");

    let r = f.post("/api/unpackage", &h, json!({"armored": "not armor at all"}));
    assert_eq!(r.status, 400);
    assert_eq!(r.json()["code"], "malformed_armor");

    let r = f.post("/api/package", &h, json!({"key_system": "nope", "plaintext": "x"}));
    assert_eq!(r.status, 404);
}

#[test]
fn foreign_password_package_returns_a_remediation_form() {
    let f = start(Duration::from_secs(600));
    let token = f.unlock();
    let auth = bearer(&token);
    let h = [("Authorization", auth.as_str())];

    // Sealed under a password this agent does not hold.
    let values: FormValues = [("label", "other"), ("password", "different"), ("iterations", "1000"), ("stored", "no")]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
    let mut rng = OsRng;
    let other = resolve_scheme_name("password").unwrap().create(&values, &mut SchemeEnv::new(&mut rng)).unwrap();
    let mut ring = Keyring::new();
    ring.add(other);
    let system = ring.select("other").unwrap();
    let pkg = system
        .encrypt(&mut SchemeEnv::new(&mut rng), &[], b"from elsewhere", Default::default())
        .unwrap();
    let armored = pkg.to_armor().unwrap().into_string();

    let r = f.post("/api/unpackage", &h, json!({"armored": armored}));
    assert_eq!(r.status, 422, "{}", r.body);
    let remediation = &r.json()["remediation"];
    assert!(remediation["code"].is_string());
    let fields = remediation["remediation"]["fields"].as_array().expect("form fields");
    assert!(fields.iter().any(|f| f["field_name"] == "password"), "{remediation}");

    let r = f.post("/api/unpackage", &h, json!({"armored": armored, "password": "wrong"}));
    assert_eq!(r.status, 401, "{}", r.body);
    assert_eq!(r.json()["remediation"]["code"], "wrong_password");
    let r = f.post("/api/unpackage", &h, json!({"armored": armored, "password": "different"}));
    assert_eq!(r.status, 200, "{}", r.body);
    assert_eq!(r.json()["plaintext"], "from elsewhere");
}

#[test]
fn cross_origin_requests_are_refused() {
    let f = start(Duration::from_secs(600));
    let body = json!({"master_password": MASTER});
    for origin in ["https://evil.example", "http://127.0.0.1:1", "null"] {
        let r = f.post("/api/unlock", &[("Origin", origin)], body.clone());
        assert_eq!(r.status, 403, "{origin}");
        assert_eq!(r.json()["code"], "forbidden_origin");
    }
    let own = f.server.url.clone();
    let r = f.post("/api/unlock", &[("Origin", own.as_str())], body.clone());
    assert_eq!(r.status, 200);
    let port = own.rsplit(':').next().unwrap();
    let localhost = format!("http://localhost:{port}");
    let token = r.json()["token"].as_str().unwrap().to_owned();
    let auth = bearer(&token);
    let r = get(&f.url("/api/keysystems"), &[("Origin", localhost.as_str()), ("Authorization", auth.as_str())]);
    assert_eq!(r.status, 200);
    let r = get(&f.url("/api/keysystems"), &[("Origin", "https://evil.example"), ("Authorization", auth.as_str())]);
    assert_eq!(r.status, 403);
    assert!(r.headers.get("access-control-allow-origin").is_none());
}

#[test]
fn lock_states() {
    let f = start(Duration::from_millis(300));
    assert_eq!(get(&f.url("/api/keysystems"), &[]).status, 423);
    assert_eq!(f.post("/api/unlock", &[], json!({"master_password": "wrong"})).status, 401);
    assert_eq!(get(&f.url("/api/keysystems"), &[]).status, 423);

    let token = f.unlock();
    let auth = bearer(&token);
    assert_eq!(get(&f.url("/api/keysystems"), &[("Authorization", auth.as_str())]).status, 200);
    assert_eq!(get(&f.url("/api/keysystems"), &[("Authorization", "Bearer 1234")]).status, 401);
    assert_eq!(get(&f.url("/api/keysystems"), &[]).status, 401);

    std::thread::sleep(Duration::from_millis(400));
    assert_eq!(get(&f.url("/api/keysystems"), &[("Authorization", auth.as_str())]).status, 423);
    let r = f.post("/api/package", &[("Authorization", auth.as_str())], json!({"key_system": "team", "plaintext": "x"}));
    assert_eq!(r.status, 423);
}

#[test]
fn missing_keystore_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let config = AgentConfig::new(dir.path().join("absent.mgks"), dir.path().join("bench.jsonl"));
    let server = BackgroundServer::start(0, move |url| Agent::new(config, url).unwrap().router()).unwrap();
    let r = call(http().post(&format!("{}/api/unlock", server.url)), &[], json!({"master_password": MASTER}));
    assert_eq!(r.status, 404);
    assert_eq!(r.json()["code"], "no_keystore");
}

#[test]
fn listing_exposes_no_secrets() {
    let f = start(Duration::from_secs(600));
    let token = f.unlock();
    let auth = bearer(&token);
    let r = get(&f.url("/api/keysystems"), &[("Authorization", auth.as_str())]);
    assert_eq!(r.status, 200);
    let list = r.json();
    let entry = &list.as_array().unwrap()[0];
    assert_eq!(entry["label"], "team");
    assert_eq!(entry["scheme_id"], "password");
    let keys: Vec<_> = entry.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, ["can_have_recipients", "fingerprint", "identity", "label", "scheme_id"]);

    // The stored derived key must not appear in any encoding.
    let store = Keystore::open(f.dir.path().join("keys.mgks"), MASTER).unwrap();
    for record in store.records() {
        assert!(!r.body.contains(&hex::encode(&record.state)));
        let b64 = serde_json::to_value(record).unwrap()["state"].as_str().unwrap_or_default().to_owned();
        if !b64.is_empty() {
            assert!(!r.body.contains(&b64));
        }
    }
    assert!(!r.body.contains(SHARED));
    assert!(!r.body.contains(MASTER));
}

#[test]
fn plaintext_never_reaches_disk() {
    let f = start(Duration::from_secs(600));
    let token = f.unlock();
    let auth = bearer(&token);
    let h = [("Authorization", auth.as_str())];
    let secret = "zebra-kumquat-sentinel-4711";
    let r = f.post("/api/package", &h, json!({"key_system": "team", "plaintext": secret}));
    let armored = r.json()["armored"].as_str().unwrap().to_owned();
    assert_eq!(f.post("/api/unpackage", &h, json!({"armored": armored})).json()["plaintext"], secret);
    for entry in std::fs::read_dir(f.dir.path()).unwrap() {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        assert!(!bytes.windows(secret.len()).any(|w| w == secret.as_bytes()));
        assert!(!bytes.windows(SHARED.len()).any(|w| w == SHARED.as_bytes()));
    }
}

#[test]
fn only_the_four_asset_routes_are_served() {
    let f = start(Duration::from_secs(600));
    for (route, kind) in [
        ("/overlay/read.html", "text/html"),
        ("/overlay/compose.html", "text/html"),
        ("/frontend.js", "text/javascript"),
        ("/bookmarklet.js", "text/javascript"),
    ] {
        let r = get(&f.url(route), &[]);
        assert_eq!(r.status, 200, "{route}");
        let ct = r.headers.get("content-type").unwrap().to_str().unwrap();
        assert!(ct.starts_with(kind), "{route}: {ct}");
        assert!(!r.body.contains(mg_server::agent::assets::ORIGIN_PLACEHOLDER));
    }
    let bookmarklet = get(&f.url("/bookmarklet.js"), &[]).body;
    assert!(bookmarklet.contains(&f.server.url));

    for path in ["/", "/etc/passwd", "/overlay/", "/overlay/../Cargo.toml", "/overlay/%2e%2e/keys.mgks", "/keys.mgks", "/api"] {
        assert_eq!(get(&f.url(path), &[]).status, 404, "{path}");
    }
}

#[test]
fn custom_asset_directory_is_served_with_origin() {
    let dir = tempfile::tempdir().unwrap();
    let assets = dir.path().join("assets");
    std::fs::create_dir_all(assets.join("overlay")).unwrap();
    for file in ["overlay/read.html", "overlay/compose.html", "frontend.js", "bookmarklet.js"] {
        std::fs::write(assets.join(file), format!("custom {file} at __AGENT_ORIGIN__")).unwrap();
    }
    let mut config = AgentConfig::new(dir.path().join("k"), dir.path().join("b"));
    config.assets_dir = Some(assets);
    let server = BackgroundServer::start(0, move |url| Agent::new(config, url).unwrap().router()).unwrap();
    let r = get(&format!("{}/frontend.js", server.url), &[]);
    assert_eq!(r.body, format!("custom frontend.js at {}", server.url));
}

#[test]
fn bench_records_are_validated_and_appended() {
    let f = start(Duration::from_secs(600));
    let record = json!({"stage": 2, "n": 100, "per_element_ms": 0.5, "total_ms": 50.0, "browser_label": "firefox-131", "run": 3});
    let r = f.post("/api/bench", &[("Origin", "http://fixtures.test")], record.clone());
    assert_eq!(r.status, 204, "{}", r.body);
    assert_eq!(r.headers.get("access-control-allow-origin").unwrap(), "*");
    assert_eq!(f.post("/api/bench", &[], json!({"stage": 3, "n": 1, "per_element_ms": 1, "total_ms": 1, "browser_label": "x"})).status, 400);
    assert_eq!(f.post("/api/bench", &[], json!({"stage": 1})).status, 400);
    let garbage = http().post(&f.url("/api/bench")).send(&b"{not json"[..]).unwrap();
    assert_eq!(garbage.status().as_u16(), 400);

    let preflight = http().options(&f.url("/api/bench")).header("Origin", "http://fixtures.test").call().unwrap();
    assert!(preflight.status().is_success());

    let lines = std::fs::read_to_string(f.dir.path().join("bench.jsonl")).unwrap();
    let parsed: Vec<Value> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(parsed, [record]);
}
