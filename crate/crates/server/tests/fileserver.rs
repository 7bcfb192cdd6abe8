mod common;

use std::time::Duration;

use common::http;
use mg_core::attachment::{download, upload};
use mg_core::{BlobStore, Capability, Error, MemoryBlobStore};
use mg_server::{BackgroundServer, FileServer, FileServerClient, FileServerConfig};
use rand::rngs::OsRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn serve(config: FileServerConfig) -> (FileServer, BackgroundServer) {
    let fs = FileServer::open(config).unwrap();
    let f = fs.clone();
    let http = BackgroundServer::start(0, move |_| f.router()).unwrap();
    (fs, http)
}

/// True when `haystack` shares any `n`-byte substring with `needle_source`.
fn shares_substring(needle_source: &[u8], haystack: &[u8], n: usize) -> bool {
    let mut windows: Vec<&[u8]> = needle_source.windows(n).collect();
    windows.sort_unstable();
    windows.dedup();
    haystack.windows(n).any(|w| windows.binary_search(&w).is_ok())
}

/// Compressible, text-like contents: a plaintext leak would be easy to spot.
fn document(len: usize) -> Vec<u8> {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let words = ["invoice", "quarterly", "confidential", "merger", "payroll", "draft", "2026", "total:"];
    let mut out = Vec::with_capacity(len + 16);
    while out.len() < len {
        out.extend_from_slice(words[rng.gen_range(0..words.len())].as_bytes());
        out.push(if rng.gen_bool(0.1) { b'\n' } else { b' ' });
    }
    out.truncate(len);
    out
}

#[test]
fn five_mib_attachment_roundtrip_without_plaintext_on_server() {
    let dir = tempfile::tempdir().unwrap();
    let (fs, server) = serve(FileServerConfig { data_dir: Some(dir.path().to_owned()), ..Default::default() });
    let client = FileServerClient::new(&server.url);
    let contents = document(5 * 1024 * 1024);

    let manifest = upload(&client, &mut OsRng, "report.txt", &contents).unwrap();
    assert_eq!(download(&client, &manifest).unwrap(), contents);

    assert!(shares_substring(&contents, &contents[1000..1016], 16), "scanner sanity");
    let stored = fs.stored_bytes(&manifest.capability).unwrap();
    assert!(!shares_substring(&contents, &stored, 16));
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name().into_string().unwrap();
        assert!(!name.contains(manifest.capability.as_str()), "capability appears in file name");
        let bytes = std::fs::read(entry.path()).unwrap();
        assert!(!shares_substring(&contents, &bytes, 16));
    }
}

#[test]
fn substitution_is_detected() {
    let (_fs, server) = serve(FileServerConfig::default());
    let client = FileServerClient::new(&server.url);
    let a = upload(&client, &mut OsRng, "a.bin", b"first attachment contents").unwrap();
    let b = upload(&client, &mut OsRng, "a.bin", b"second attachment contents").unwrap();

    // Pointing a manifest at another blob fails authentication.
    let mut swapped = a.clone();
    swapped.capability = b.capability.clone();
    assert!(matches!(download(&client, &swapped), Err(Error::IntegrityFailure)));

    // A manifest whose hash was altered rejects the genuine blob.
    let mut rehashed = a.clone();
    rehashed.sha256[0] ^= 1;
    assert!(matches!(download(&client, &rehashed), Err(Error::IntegrityFailure)));

    // Renaming the file breaks the binding too.
    let mut renamed = a.clone();
    renamed.filename = "b.bin".into();
    assert!(matches!(download(&client, &renamed), Err(Error::IntegrityFailure)));

    assert_eq!(download(&client, &a).unwrap(), b"first attachment contents");
}

#[test]
fn server_side_blob_replacement_is_detected() {
    let store = MemoryBlobStore::new();
    let a = upload(&store, &mut OsRng, "x", b"original").unwrap();
    let b = upload(&store, &mut OsRng, "x", b"attacker").unwrap();
    store.replace(&a.capability, store.get(&b.capability).unwrap());
    assert!(matches!(download(&store, &a), Err(Error::IntegrityFailure)));
}

#[test]
fn unknown_and_malformed_capabilities_are_404() {
    let (_fs, server) = serve(FileServerConfig::default());
    let client = FileServerClient::new(&server.url);
    let unknown = Capability::random(&mut OsRng);
    assert!(matches!(client.get(&unknown), Err(Error::NotFound(_))));
    let agent = http();
    for path in ["/files/short", "/files/..%2F..%2Fetc%2Fpasswd", "/files/"] {
        let resp = agent.get(&format!("{}{path}", server.url)).call().unwrap();
        assert_eq!(resp.status().as_u16(), 404, "{path}");
    }
}

#[test]
fn oversize_uploads_are_rejected_with_the_limit() {
    let (_fs, server) = serve(FileServerConfig { max_blob: 4096, ..Default::default() });
    let client = FileServerClient::new(&server.url);
    client.put(&[1u8; 4096]).unwrap();
    match client.put(&[1u8; 4097]) {
        Err(Error::PayloadTooLarge { size, limit }) => {
            assert_eq!(size, 4097);
            assert_eq!(limit, 4096);
        }
        other => panic!("expected PayloadTooLarge, got {other:?}"),
    }
    let resp = http().post(&format!("{}/files", server.url)).send(&[][..]).unwrap();
    assert_eq!(resp.status().as_u16(), 400);
}

#[test]
fn identical_uploads_get_distinct_capabilities() {
    let (_fs, server) = serve(FileServerConfig::default());
    let client = FileServerClient::new(&server.url);
    let c1 = client.put(b"same bytes").unwrap();
    let c2 = client.put(b"same bytes").unwrap();
    assert_ne!(c1, c2);
    assert_eq!(client.get(&c1).unwrap(), b"same bytes");
    assert_eq!(client.get(&c2).unwrap(), b"same bytes");
}

#[test]
fn requests_are_rate_limited_per_client() {
    let (_fs, server) = serve(FileServerConfig {
        rate_limit: 5,
        rate_window: Duration::from_secs(3600),
        ..Default::default()
    });
    let agent = http();
    let statuses: Vec<u16> = (0..7)
        .map(|_| agent.post(&format!("{}/files", server.url)).send(&b"x"[..]).unwrap().status().as_u16())
        .collect();
    assert_eq!(statuses, [201, 201, 201, 201, 201, 429, 429]);
}
