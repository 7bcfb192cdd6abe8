use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use mg_core::attachment::{download, upload};
use mg_core::scheme::password::{PasswordSystem, DEFAULT_ITERATIONS};
use mg_core::scheme::rsa::{decode_public_key, public_fingerprint, verify_package};
use mg_core::{
    normalize_identity, resolve_scheme, resolve_scheme_name, scan_text, EncryptOptions, Error, FormValues,
    KeyDirectory, KeySystem, Keyring, Keystore, MessageBody, MessagePackage, SchemeEnv, SchemeId,
};
use mg_server::{FileServerClient, KeyServerClient};
use rand::rngs::OsRng;
use zeroize::Zeroizing;

use crate::args::*;
use crate::bench::{self, BenchFixtureSpec};
use crate::session::{self, SavedSession};
use crate::{CliError, CliResult};

pub struct Context {
    global: GlobalArgs,
}

fn secret_env(var: &str) -> CliResult<Zeroizing<String>> {
    match std::env::var(var) {
        Ok(v) if !v.is_empty() => Ok(Zeroizing::new(v)),
        _ => Err(CliError::Failed(format!("environment variable {var} is not set"))),
    }
}

fn optional_env(var: &str) -> Option<Zeroizing<String>> {
    std::env::var(var).ok().filter(|v| !v.is_empty()).map(Zeroizing::new)
}

/// Attaches the scheme's own advice for a failure, when it has any.
fn scheme_failure(scheme_id: SchemeId, error: Error) -> CliError {
    let advice = resolve_scheme(scheme_id as u8).map(|s| s.handle_error(&error));
    match advice {
        Ok(a) if a.code.is_recoverable() => CliError::Hinted { source: error, hint: a.message },
        _ => error.into(),
    }
}

impl Context {
    pub fn new(global: GlobalArgs) -> Self {
        Context { global }
    }

    pub fn keystore_path(&self) -> PathBuf {
        if let Some(p) = &self.global.keystore {
            return p.clone();
        }
        let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        home.join(".messageguard").join("keystore.mgks")
    }

    fn session_path(&self) -> PathBuf {
        session::path_for(&self.keystore_path())
    }

    fn master_password(&self) -> CliResult<Zeroizing<String>> {
        secret_env(&self.global.master_pass_env)
    }

    pub fn open_keystore(&self) -> CliResult<Keystore> {
        let path = self.keystore_path();
        Keystore::open(&path, &self.master_password()?).map_err(|e| match e {
            Error::NotFound(_) => CliError::Failed(format!(
                "no key store at {}; create a key with `mg keygen` first",
                path.display()
            )),
            other => other.into(),
        })
    }

    fn open_or_init_keystore(&self) -> CliResult<Keystore> {
        let path = self.keystore_path();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(CliError::io(parent.display()))?;
        }
        Ok(Keystore::open_or_init(&path, &self.master_password()?, DEFAULT_ITERATIONS)?)
    }

    fn keyring(&self) -> CliResult<Keyring> {
        Ok(Keyring::from_records(self.open_keystore()?.records())?)
    }

    fn saved_session(&self) -> Option<SavedSession> {
        session::load(&self.session_path())
    }

    pub fn key_server_url(&self) -> Option<String> {
        self.global
            .key_server
            .clone()
            .or_else(|| self.saved_session().map(|s| s.key_server))
            .map(|u| u.trim_end_matches('/').to_owned())
    }

    /// Key-server client, carrying the saved token when it is for this server.
    fn directory(&self) -> CliResult<KeyServerClient> {
        let url = self
            .key_server_url()
            .ok_or_else(|| CliError::Usage("no key server; pass --key-server URL".into()))?;
        let client = KeyServerClient::new(&url);
        Ok(match self.saved_session() {
            Some(s) if s.key_server.trim_end_matches('/') == url => client.with_token(s.token),
            _ => client,
        })
    }

    fn authenticated_directory(&self) -> CliResult<KeyServerClient> {
        let client = self.directory()?;
        if client.token().is_none() {
            return Err(CliError::Failed("not logged in to the key server; run `mg login` first".into()));
        }
        Ok(client)
    }

    fn file_server(&self) -> CliResult<FileServerClient> {
        let url = self
            .global
            .file_server
            .as_deref()
            .ok_or_else(|| CliError::Usage("attachments need --file-server URL".into()))?;
        Ok(FileServerClient::new(url))
    }
}

fn read_input(path: Option<&Path>) -> CliResult<Vec<u8>> {
    match path {
        Some(p) if p.as_os_str() != "-" => std::fs::read(p).map_err(CliError::io(p.display())),
        _ => {
            let mut buf = Vec::new();
            std::io::stdin().read_to_end(&mut buf).map_err(CliError::io("stdin"))?;
            Ok(buf)
        }
    }
}

fn write_stdout(bytes: &[u8]) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes).and_then(|()| out.flush()).map_err(CliError::io("stdout"))
}

fn describe(system: &dyn KeySystem) -> String {
    format!("{}\t{}\t{}\t{}", system.fingerprint(), system.scheme_id(), system.identity(), system.label())
}

pub fn keygen(ctx: &Context, args: KeygenArgs) -> CliResult<()> {
    let scheme = resolve_scheme_name(args.scheme.name())?;
    let mut values = FormValues::new();
    let directory;
    let mut rng = OsRng;
    let mut env = SchemeEnv::new(&mut rng);
    match args.scheme {
        SchemeArg::Password => {
            let label = args
                .label
                .ok_or_else(|| CliError::Usage("--label is required for the password scheme".into()))?;
            values.insert("label".into(), label);
            values.insert("password".into(), secret_env(&args.password_env)?.to_string());
            values.insert("stored".into(), if args.no_store { "no" } else { "yes" }.into());
            if let Some(n) = args.iterations {
                values.insert("iterations".into(), n.to_string());
            }
        }
        SchemeArg::Rsa | SchemeArg::Ibe => {
            let identity = args
                .identity
                .ok_or_else(|| CliError::Usage(format!("--identity is required for the {} scheme", args.scheme.name())))?;
            values.insert("identity".into(), identity);
            if let Some(label) = args.label {
                values.insert("label".into(), label);
            }
            directory = ctx.authenticated_directory()?;
            env = env.with_directory(&directory);
        }
    }
    // Unlock before any key material is generated or published.
    let mut store = ctx.open_or_init_keystore()?;
    let system = scheme.create(&values, &mut env)?;
    store.put(system.serialize())?;
    store.save()?;
    println!("{}", describe(system.as_ref()));
    Ok(())
}

pub fn list(ctx: &Context) -> CliResult<()> {
    let ring = ctx.keyring()?;
    for system in ring.systems() {
        println!("{}", describe(system));
    }
    Ok(())
}

pub fn remove(ctx: &Context, key: &str) -> CliResult<()> {
    let mut store = ctx.open_keystore()?;
    let ring = Keyring::from_records(store.records())?;
    let fingerprint = ring.select(key)?.fingerprint();
    let removed = store.remove(&fingerprint)?;
    store.save()?;
    println!("removed {}\t{}", removed.fingerprint, removed.label());
    Ok(())
}

fn choose<'a>(ring: &'a Keyring, select: &KeySelector) -> CliResult<&'a dyn KeySystem> {
    if let Some(key) = &select.key {
        return Ok(ring.select(key)?);
    }
    let identity = select.identity.as_deref().map(normalize_identity).transpose()?;
    let hits: Vec<&dyn KeySystem> = ring
        .systems()
        .filter(|s| select.scheme.map_or(true, |sch| s.scheme_id().name() == sch.name()))
        .filter(|s| select.label.as_deref().map_or(true, |l| s.label().eq_ignore_ascii_case(l)))
        .filter(|s| identity.as_deref().map_or(true, |i| s.identity() == i))
        .collect();
    match hits.as_slice() {
        [one] => Ok(*one),
        [] => Err(Error::UnknownKeySystem(describe_selector(select)).into()),
        many => Err(CliError::Failed(format!(
            "{} key systems match {}; choose one with --key FINGERPRINT",
            many.len(),
            describe_selector(select)
        ))),
    }
}

fn describe_selector(select: &KeySelector) -> String {
    let mut parts = Vec::new();
    if let Some(s) = select.scheme {
        parts.push(format!("scheme={}", s.name()));
    }
    if let Some(l) = &select.label {
        parts.push(format!("label={l}"));
    }
    if let Some(i) = &select.identity {
        parts.push(format!("identity={i}"));
    }
    if parts.is_empty() {
        "(any)".into()
    } else {
        parts.join(" ")
    }
}

fn attachment_name(path: &Path) -> CliResult<String> {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_owned)
        .ok_or_else(|| CliError::Usage(format!("{} has no usable file name", path.display())))
}

pub fn encrypt(ctx: &Context, args: EncryptArgs) -> CliResult<()> {
    let ring = ctx.keyring()?;
    let system = choose(&ring, &args.select)?;
    let text = Zeroizing::new(read_input(args.input.as_deref())?);

    let mut attachments = Vec::with_capacity(args.attach.len());
    if !args.attach.is_empty() {
        let store = ctx.file_server()?;
        for path in &args.attach {
            let contents = Zeroizing::new(std::fs::read(path).map_err(CliError::io(path.display()))?);
            attachments.push(upload(&store, &mut OsRng, &attachment_name(path)?, &contents)?);
        }
    }
    let body = Zeroizing::new(MessageBody { text: text.to_vec(), attachments }.encode());

    let directory = if system.can_have_recipients() { Some(ctx.directory()?) } else { None };
    let mut rng = OsRng;
    let mut env = SchemeEnv::new(&mut rng);
    if let Some(d) = &directory {
        env = env.with_directory(d);
    }
    let options = EncryptOptions { sign: args.sign };
    let scheme_id = system.scheme_id();
    let package = match system.encrypt(&mut env, &args.recipients, &body, options) {
        Err(Error::PasswordRequired(_)) => {
            let password = secret_env(&args.password_env)?;
            PasswordSystem::from_state(&system.serialize())?
                .unlock(&password)
                .and_then(|s| s.encrypt(&mut env, &args.recipients, &body, options))
                .map_err(|e| scheme_failure(scheme_id, e))?
        }
        other => other.map_err(|e| scheme_failure(scheme_id, e))?,
    };
    let mut armored = package.to_armor()?.into_string();
    armored.push('\n');
    write_stdout(armored.as_bytes())
}

enum SignatureStatus {
    Absent,
    Valid(String),
    UnknownSigner(String),
}

/// Checks a package signature against the reader's own keys or the named
/// signer's published key. An invalid signature is always an error.
fn check_signature(
    ctx: &Context,
    ring: &Keyring,
    package: &MessagePackage,
    signer: Option<&str>,
) -> CliResult<SignatureStatus> {
    let Some(sig) = &package.signature else { return Ok(SignatureStatus::Absent) };
    let fp = sig.signer_fingerprint;
    if let Some(own) = ring.get(&fp) {
        return if own.verify(&package.signed_data(), &sig.signature)? {
            Ok(SignatureStatus::Valid(own.identity().to_owned()))
        } else {
            Err(Error::BadSignature.into())
        };
    }
    if let Some(identity) = signer {
        let published = ctx.directory()?.public_key(identity)?;
        let key = decode_public_key(&published.key_material)?;
        if public_fingerprint(&key) != fp {
            return Err(CliError::Failed(format!("message was not signed by the key published for {identity}")));
        }
        return if verify_package(package, &key) {
            Ok(SignatureStatus::Valid(published.identity))
        } else {
            Err(Error::BadSignature.into())
        };
    }
    Ok(SignatureStatus::UnknownSigner(fp.to_hex()))
}

fn safe_output_path(dir: &Path, filename: &str) -> CliResult<PathBuf> {
    let name = Path::new(filename);
    let mut components = name.components();
    match (components.next(), components.next()) {
        (Some(std::path::Component::Normal(n)), None) => Ok(dir.join(n)),
        _ => Err(CliError::Failed(format!("refusing to save attachment with unsafe name {filename:?}"))),
    }
}

pub fn decrypt(ctx: &Context, args: DecryptArgs) -> CliResult<()> {
    let input = read_input(args.input.as_deref())?;
    let text = std::str::from_utf8(&input).map_err(|_| Error::MalformedArmor)?;
    let package = MessagePackage::from_armor(text.trim())?;
    let ring = ctx.keyring()?;
    let password = optional_env(&args.password_env);
    let opened = ring
        .open_with_password(&package, password.as_ref().map(|p| p.as_str()))
        .map_err(|e| scheme_failure(package.scheme_id, e))?;
    let plaintext = Zeroizing::new(opened.plaintext);

    match check_signature(ctx, &ring, &package, args.signer.as_deref())? {
        SignatureStatus::Valid(who) => eprintln!("signature: valid, signed by {who}"),
        SignatureStatus::UnknownSigner(fp) if args.require_signature => {
            return Err(CliError::Failed(format!("cannot verify signer {fp}; pass --signer IDENTITY")))
        }
        SignatureStatus::UnknownSigner(fp) => eprintln!("signature: not verified (signer key {fp} unknown)"),
        SignatureStatus::Absent if args.require_signature => {
            return Err(CliError::Failed("message is not signed".into()))
        }
        SignatureStatus::Absent => {}
    }

    let body = MessageBody::decode(&plaintext)?;
    if !body.attachments.is_empty() {
        match &args.save_attachments {
            Some(dir) => {
                let store = ctx.file_server()?;
                std::fs::create_dir_all(dir).map_err(CliError::io(dir.display()))?;
                for manifest in &body.attachments {
                    let target = safe_output_path(dir, &manifest.filename)?;
                    let contents = Zeroizing::new(download(&store, manifest)?);
                    std::fs::write(&target, &*contents).map_err(CliError::io(target.display()))?;
                    eprintln!("saved {} ({} bytes)", target.display(), manifest.size);
                }
            }
            None => eprintln!(
                "message has {} attachment(s); pass --save-attachments DIR to fetch them",
                body.attachments.len()
            ),
        }
    }
    write_stdout(&Zeroizing::new(body.text))
}

pub fn scan(ctx: &Context, args: ScanArgs) -> CliResult<()> {
    let input = read_input(args.file.as_deref())?;
    let text = String::from_utf8_lossy(&input);
    let spans = scan_text(&text);
    let ring = if args.decrypt { Some(ctx.keyring()?) } else { None };
    let password = optional_env(&args.password_env);
    let mut out = String::new();
    for span in &spans {
        let scheme = MessagePackage::from_armor(span.armored.as_str())
            .map(|p| p.scheme_id.name())
            .unwrap_or("invalid");
        out.push_str(&format!("{}\t{}\t{}", span.start, span.end, scheme));
        if let Some(ring) = &ring {
            match ring.open_armored(span.armored.as_str(), password.as_ref().map(|p| p.as_str())) {
                Ok(opened) => {
                    let body = MessageBody::decode(&opened.plaintext)?;
                    let shown = serde_json::to_string(&String::from_utf8_lossy(&body.text)).expect("string serializes");
                    out.push_str(&format!("\tok\t{shown}"));
                }
                Err(e) => out.push_str(&format!("\terror\t{e}")),
            }
        }
        out.push('\n');
    }
    write_stdout(out.as_bytes())
}

pub fn account_create(ctx: &Context, args: AccountArgs) -> CliResult<()> {
    let password = secret_env(&args.password_env)?;
    ctx.directory()?.create_account(&args.username, &password)?;
    println!("created account {}", args.username);
    Ok(())
}

pub fn login(ctx: &Context, args: AccountArgs) -> CliResult<()> {
    let password = secret_env(&args.password_env)?;
    let mut client = ctx.directory()?;
    let token = client.login(&args.username, &password)?;
    let path = ctx.session_path();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(CliError::io(parent.display()))?;
    }
    let saved = SavedSession {
        key_server: ctx.key_server_url().expect("directory() found a server"),
        username: args.username.clone(),
        token: token.token,
        expires_at: token.expires_at,
    };
    session::save(&path, &saved).map_err(CliError::io(path.display()))?;
    println!("logged in as {}", args.username);
    Ok(())
}

pub fn claim(ctx: &Context, identity: &str) -> CliResult<()> {
    let started = ctx
        .authenticated_directory()?
        .start_proof(identity)
        .map_err(|e| match e {
            Error::Exists(_) => CliError::Failed(format!("{identity} is owned by another account")),
            other => other.into(),
        })?;
    eprintln!(
        "a code was sent to {}; finish with `mg confirm --identity {} --proof-id {} --code CODE`",
        started.identity, started.identity, started.proof_id
    );
    println!("{}", started.proof_id);
    Ok(())
}

pub fn confirm(ctx: &Context, identity: &str, proof_id: &str, code: &str) -> CliResult<()> {
    let owned = ctx.authenticated_directory()?.complete_proof(identity, proof_id, code)?;
    println!("{} is now owned by {}", owned.identity, owned.owner);
    Ok(())
}

pub fn release(ctx: &Context, identity: &str) -> CliResult<()> {
    ctx.authenticated_directory()?.release(identity)?;
    println!("released {identity}");
    Ok(())
}

pub fn bench_fixture(ctx: &Context, args: BenchFixtureArgs) -> CliResult<()> {
    let spec = BenchFixtureSpec {
        n: args.n,
        seed: args.seed,
        dynamic_delay_ms: args.dynamic_delay_ms,
        agent_origin: args.agent,
    };
    let fixture = bench::generate(&spec)?;
    bench::write_fixture(&args.out, &spec, &fixture)?;
    if args.import {
        let mut store = ctx.open_or_init_keystore()?;
        store.put(fixture.key.clone())?;
        store.save()?;
    }
    for name in ["stage1.html", "stage2.html", "fixture.json"] {
        println!("{}", args.out.join(name).display());
    }
    Ok(())
}

pub fn bench_report(args: BenchReportArgs) -> CliResult<i32> {
    if args.runs < bench::MIN_RUNS {
        return Err(CliError::Usage(format!("--runs must be at least {}", bench::MIN_RUNS)));
    }
    let records = bench::read_results(&args.results)?;
    let report = bench::bench_report(&records, args.runs)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        print!("{}", report.to_text());
    }
    Ok(if args.strict && !report.regressions.is_empty() { 1 } else { 0 })
}
