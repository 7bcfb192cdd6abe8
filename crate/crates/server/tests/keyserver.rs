mod common;

use std::sync::{Arc, Barrier};
use std::time::Duration;

use common::{http, start, start_with, start_with_ttl, TestKeyServer};
use mg_core::scheme::ibe::IbeSystem;
use mg_core::scheme::rsa::RsaSystem;
use mg_core::{Error, KeyDirectory, KeySystem, SchemeId};
use mg_server::keyserver::delivery::CaptureDelivery;
use rand::rngs::OsRng;
use serde_json::json;

#[test]
fn claim_conflict_release_reclaim() {
    let ks = start();
    let alice = ks.account("alice");
    let bob = ks.account("bob");

    ks.claim(&alice, "shared@example.com").unwrap();
    assert_eq!(ks.server.owner_of("shared@example.com").as_deref(), Some("alice"));

    match bob.start_proof("shared@example.com") {
        Err(Error::Exists(_)) => {}
        other => panic!("expected conflict, got {other:?}"),
    }
    assert!(matches!(bob.release("shared@example.com"), Err(Error::NotOwner(_))));

    alice.release("shared@example.com").unwrap();
    assert_eq!(ks.server.owner_of("shared@example.com"), None);

    ks.claim(&bob, "shared@example.com").unwrap();
    assert_eq!(ks.server.owner_of("shared@example.com").as_deref(), Some("bob"));
}

#[test]
fn concurrent_claims_have_exactly_one_winner() {
    for round in 0..5 {
        let ks = Arc::new(start());
        let identity = format!("race{round}@example.com");
        let clients: Vec<_> = ["c1", "c2"].iter().map(|u| ks.account(u)).collect();
        // Both proofs are started before either completes.
        let proofs: Vec<_> = clients
            .iter()
            .map(|c| {
                let p = c.start_proof(&identity).unwrap();
                let code = ks.inbox.latest(&identity).unwrap().code;
                (p.proof_id, code)
            })
            .collect();
        let barrier = Arc::new(Barrier::new(2));
        let handles: Vec<_> = clients
            .into_iter()
            .zip(proofs)
            .map(|(client, (proof_id, code))| {
                let barrier = barrier.clone();
                let identity = identity.clone();
                std::thread::spawn(move || {
                    barrier.wait();
                    client.complete_proof(&identity, &proof_id, &code)
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        let winners: Vec<_> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        assert_eq!(winners.len(), 1, "round {round}: {results:?}");
        assert!(results.iter().any(|r| matches!(r, Err(Error::Exists(_)))));
        assert_eq!(ks.server.owner_of(&identity).as_deref(), Some(winners[0].owner.as_str()));
    }
}

#[test]
fn rsa_publish_and_lookup_requires_ownership() {
    let ks = start();
    let alice = ks.account("alice");
    let key = RsaSystem::generate("alice@example.com", &mut OsRng).unwrap();
    assert!(matches!(
        alice.publish_key("alice@example.com", SchemeId::Rsa, &key.public_key_bytes()),
        Err(Error::NotOwner(_))
    ));
    ks.claim(&alice, "alice@example.com").unwrap();
    alice.publish_key("Alice@Example.com", SchemeId::Rsa, &key.public_key_bytes()).unwrap();

    let anonymous = ks.client();
    let published = anonymous.public_key("alice@example.com").unwrap();
    assert_eq!(published.key_material, key.public_key_bytes());
    assert!(matches!(anonymous.public_key("nobody@example.com"), Err(Error::UnknownRecipient(_))));

    // Releasing withdraws the key.
    alice.release("alice@example.com").unwrap();
    assert!(matches!(anonymous.public_key("alice@example.com"), Err(Error::UnknownRecipient(_))));
}

#[test]
fn publish_rejects_garbage_and_non_rsa_keys() {
    let ks = start();
    let alice = ks.account("alice");
    ks.claim(&alice, "alice@example.com").unwrap();
    assert!(alice.publish_key("alice@example.com", SchemeId::Rsa, b"not a key").is_err());
    assert!(alice.publish_key("alice@example.com", SchemeId::Ibe, b"anything").is_err());
}

#[test]
fn ibe_extraction_requires_ownership_and_roundtrips() {
    let ks = start();
    let bob = ks.account("bob");
    assert!(matches!(bob.extract_ibe_key("bob@example.com"), Err(Error::NotOwner(_))));
    ks.claim(&bob, "bob@example.com").unwrap();
    let system = IbeSystem::from_directory("bob@example.com", &bob, &mut OsRng).unwrap();

    let sender = ks.client();
    let mut rng = OsRng;
    let mut env = mg_core::SchemeEnv::new(&mut rng).with_directory(&sender);
    let pkg = system
        .encrypt(&mut env, &["bob@example.com".into()], b"hi bob", Default::default())
        .unwrap();
    assert_eq!(system.decrypt(&pkg).unwrap(), b"hi bob");
}

fn scan_for(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[test]
fn master_secret_never_leaves_the_server() {
    let ks = start();
    let secret = ks.server.master_secret_encoding();
    let hex_secret = hex::encode(&secret);
    let b64 = base64_std(&secret);
    let bob = ks.account("bob");
    ks.claim(&bob, "bob@example.com").unwrap();

    let agent = http();
    let token = bob.token().unwrap().to_owned();
    let mut bodies = Vec::new();
    let mut push = |mut r: ureq::http::Response<ureq::Body>| bodies.push(r.body_mut().read_to_vec().unwrap());
    push(agent.get(&format!("{}/ibe/params", ks.http.url)).call().unwrap());
    for _ in 0..3 {
        push(
            agent
                .post(&format!("{}/ibe/extract", ks.http.url))
                .header("Authorization", &format!("Bearer {token}"))
                .send_json(json!({"identity": "bob@example.com"}))
                .unwrap(),
        );
    }
    push(agent.get(&format!("{}/identities/bob@example.com/publicKey", ks.http.url)).call().unwrap());
    // Scalar-sized windows of the secret encoding, raw and text-encoded.
    for body in &bodies {
        for chunk in secret.chunks(32) {
            assert!(!scan_for(body, chunk));
        }
        assert!(!scan_for(body, hex_secret.as_bytes()));
        assert!(!scan_for(body, b64.as_bytes()));
    }
}

fn base64_std(bytes: &[u8]) -> String {
    // Avoids another dependency: round trip through the core serde helper.
    #[derive(serde::Serialize)]
    struct W<'a>(#[serde(with = "mg_core::serde_b64")] &'a [u8]);
    serde_json::to_string(&W(bytes)).unwrap().trim_matches('"').to_owned()
}

fn status(resp: &ureq::http::Response<ureq::Body>) -> u16 {
    resp.status().as_u16()
}

#[test]
fn status_codes() {
    let ks = start();
    let url = &ks.http.url;
    let agent = http();
    let creds = json!({"username": "carol", "password": "pw"});
    assert_eq!(status(&agent.post(&format!("{url}/accounts")).send_json(&creds).unwrap()), 201);
    assert_eq!(status(&agent.post(&format!("{url}/accounts")).send_json(&creds).unwrap()), 409);
    assert_eq!(
        status(&agent.post(&format!("{url}/session")).send_json(json!({"username": "carol", "password": "no"})).unwrap()),
        401
    );
    assert_eq!(status(&agent.post(&format!("{url}/identities/c@example.com/proof")).send_empty().unwrap()), 401);
    assert_eq!(
        status(
            &agent
                .post(&format!("{url}/identities/c@example.com/proof"))
                .header("Authorization", "Bearer 00")
                .send_empty()
                .unwrap()
        ),
        401
    );
    let carol = {
        let mut c = ks.client();
        c.login("carol", "pw").unwrap();
        c
    };
    let auth = format!("Bearer {}", carol.token().unwrap());
    assert_eq!(
        status(
            &agent
                .post(&format!("{url}/identities/c@example.com/proof/deadbeef"))
                .header("Authorization", &auth)
                .send_json(json!({"code": "000000"}))
                .unwrap()
        ),
        404
    );
    assert_eq!(
        status(&agent.delete(&format!("{url}/identities/c@example.com")).header("Authorization", &auth).call().unwrap()),
        403
    );
    assert_eq!(status(&agent.get(&format!("{url}/identities/c@example.com/publicKey")).call().unwrap()), 404);
    assert_eq!(status(&agent.get(&format!("{url}/identities/not%20an%20identity/publicKey")).call().unwrap()), 400);
}

#[test]
fn expired_proof_is_gone() {
    let ks = start_with_ttl(Duration::ZERO);
    let alice = ks.account("alice");
    let started = alice.start_proof("alice@example.com").unwrap();
    let code = ks.inbox.latest("alice@example.com").unwrap().code;
    let err = alice.complete_proof("alice@example.com", &started.proof_id, &code).unwrap_err();
    assert!(err.to_string().contains("expired"), "{err}");
    assert_eq!(ks.server.owner_of("alice@example.com"), None);
}

#[test]
fn three_bad_codes_invalidate_the_proof() {
    let ks = start();
    let alice = ks.account("alice");
    let started = alice.start_proof("alice@example.com").unwrap();
    let code = ks.inbox.latest("alice@example.com").unwrap().code;
    let wrong = if code == "000000" { "000001" } else { "000000" };
    for _ in 0..3 {
        assert!(matches!(
            alice.complete_proof("alice@example.com", &started.proof_id, wrong),
            Err(Error::InvalidInput(_))
        ));
    }
    let err = alice.complete_proof("alice@example.com", &started.proof_id, &code).unwrap_err();
    assert!(err.to_string().contains("expired"), "{err}");
    assert_eq!(ks.server.owner_of("alice@example.com"), None);
}

#[test]
fn proofs_are_bound_to_the_requesting_account() {
    let ks = start();
    let alice = ks.account("alice");
    let mallory = ks.account("mallory");
    let started = alice.start_proof("alice@example.com").unwrap();
    let code = ks.inbox.latest("alice@example.com").unwrap().code;
    assert!(matches!(
        mallory.complete_proof("alice@example.com", &started.proof_id, &code),
        Err(Error::NotFound(_))
    ));
}

#[test]
fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let key = RsaSystem::generate("dana@example.com", &mut OsRng).unwrap();
    let params_before;
    {
        let inbox = CaptureDelivery::new();
        let mut c = common::config(&inbox);
        c.data_dir = Some(dir.path().to_owned());
        c.passphrase = "server pass".into();
        let ks = start_with(c, inbox);
        let dana = ks.account("dana");
        ks.claim(&dana, "dana@example.com").unwrap();
        dana.publish_key("dana@example.com", SchemeId::Rsa, &key.public_key_bytes()).unwrap();
        params_before = ks.client().ibe_params().unwrap();
    }
    let inbox = CaptureDelivery::new();
    let mut c = common::config(&inbox);
    c.data_dir = Some(dir.path().to_owned());
    c.passphrase = "server pass".into();
    let ks: TestKeyServer = start_with(c, inbox);
    assert_eq!(ks.server.owner_of("dana@example.com").as_deref(), Some("dana"));
    let client = ks.client();
    assert_eq!(client.public_key("dana@example.com").unwrap().key_material, key.public_key_bytes());
    assert_eq!(client.ibe_params().unwrap(), params_before);
    // Accounts persist; sessions do not.
    let mut again = ks.client();
    again.login("dana", "correct horse").unwrap();
    assert!(ks.client().with_token("stale").release("dana@example.com").is_err());

    // The journal and parameter file never hold the master secret.
    let secret = ks.server.master_secret_encoding();
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        for chunk in secret.chunks(32) {
            assert!(!scan_for(&bytes, chunk));
        }
    }
}

#[test]
fn wrong_passphrase_refuses_to_start() {
    let dir = tempfile::tempdir().unwrap();
    let inbox = CaptureDelivery::new();
    let mut c = common::config(&inbox);
    c.data_dir = Some(dir.path().to_owned());
    c.passphrase = "right".into();
    drop(mg_server::KeyServer::open(c).unwrap());
    let mut c = common::config(&inbox);
    c.data_dir = Some(dir.path().to_owned());
    c.passphrase = "wrong".into();
    assert!(mg_server::KeyServer::open(c).is_err());
}
