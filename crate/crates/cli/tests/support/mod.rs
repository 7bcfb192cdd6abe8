//! Drives the `mg` binary as a subprocess.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::mpsc;
use std::time::Duration;

pub const BIN: &str = env!("CARGO_BIN_EXE_mg");

pub fn mg() -> Command {
    let mut cmd = Command::new(BIN);
    for var in ["MG_KEYSTORE", "MG_KEY_SERVER", "MG_FILE_SERVER", "MG_MASTER_PASSWORD", "MG_SHARED_PASSWORD", "MG_SERVER_PASSWORD"] {
        cmd.env_remove(var);
    }
    cmd.env("RUST_LOG", "warn");
    cmd
}

pub fn run_with_stdin(mut cmd: Command, stdin: &[u8]) -> Output {
    cmd.stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    let mut child = cmd.spawn().expect("spawn mg");
    let mut pipe = child.stdin.take().unwrap();
    let input = stdin.to_vec();
    let writer = std::thread::spawn(move || {
        let _ = pipe.write_all(&input);
    });
    let out = child.wait_with_output().expect("wait for mg");
    writer.join().unwrap();
    out
}

pub fn run(cmd: Command) -> Output {
    run_with_stdin(cmd, b"")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[track_caller]
pub fn ok(out: Output) -> Output {
    assert!(out.status.success(), "mg failed ({:?}): {}", out.status.code(), stderr(&out));
    out
}

/// A long-running `mg serve-*` process, killed on drop.
pub struct Service {
    child: Child,
    pub url: String,
}

impl Service {
    pub fn start(args: &[&str], envs: &[(&str, &str)]) -> Service {
        let mut cmd = mg();
        cmd.args(args).args(["--port", "0"]);
        for (k, v) in envs {
            cmd.env(k, v);
        }
        cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::inherit());
        let mut child = cmd.spawn().expect("spawn server");
        let stdout = child.stdout.take().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut line = String::new();
            let _ = BufReader::new(stdout).read_line(&mut line);
            let _ = tx.send(line);
        });
        let line = rx.recv_timeout(Duration::from_secs(30)).expect("server announced its URL");
        let url = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected first line {line:?}"))
            .to_owned();
        Service { child, url }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One person: a key store, a master password, and key-server credentials.
pub struct User {
    pub name: String,
    pub keystore: PathBuf,
    pub key_server: Option<String>,
    pub file_server: Option<String>,
}

impl User {
    pub fn new(dir: &Path, name: &str) -> User {
        User {
            name: name.to_owned(),
            keystore: dir.join(format!("{name}.mgks")),
            key_server: None,
            file_server: None,
        }
    }

    pub fn master(&self) -> String {
        format!("{}-master-password", self.name)
    }

    pub fn cmd(&self, args: &[&str]) -> Command {
        let mut cmd = mg();
        cmd.arg("--keystore").arg(&self.keystore);
        if let Some(ks) = &self.key_server {
            cmd.args(["--key-server", ks]);
        }
        if let Some(fs) = &self.file_server {
            cmd.args(["--file-server", fs]);
        }
        cmd.env("MG_MASTER_PASSWORD", self.master());
        cmd.env("MG_SERVER_PASSWORD", format!("{}-server-password", self.name));
        cmd.args(args);
        cmd
    }

    pub fn run(&self, args: &[&str]) -> Output {
        run(self.cmd(args))
    }

    /// Registers, logs in and proves ownership of `identity` via the outbox.
    pub fn enroll(&self, outbox: &Path, identity: &str) {
        ok(self.run(&["account-create", "--username", &self.name]));
        ok(self.run(&["login", "--username", &self.name]));
        let proof_id = stdout(&ok(self.run(&["claim", "--identity", identity]))).trim().to_owned();
        let message = read_outbox(outbox, identity);
        assert_eq!(message["proof_id"], proof_id.as_str());
        let code = message["code"].as_str().unwrap().to_owned();
        ok(self.run(&["confirm", "--identity", identity, "--proof-id", &proof_id, "--code", &code]));
    }
}

pub fn read_outbox(outbox: &Path, identity: &str) -> serde_json::Value {
    let path = mg_server::keyserver::delivery::OutboxDelivery::file_for(outbox, identity);
    serde_json::from_slice(&std::fs::read(&path).expect("proof delivered to outbox")).unwrap()
}

pub fn key_server(dir: &Path) -> Service {
    let outbox = dir.join("outbox");
    Service::start(
        &["serve-keyserver", "--outbox", outbox.to_str().unwrap(), "--password-iterations", "1000"],
        &[],
    )
}

pub fn mg_args(args: &[&str]) -> Command {
    let mut cmd = mg();
    cmd.args(args);
    cmd
}
