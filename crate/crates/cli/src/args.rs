use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mg", version, about = "Encrypt and decrypt text anywhere with MessageGuard keys")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Encrypted key store file.
    #[arg(long, global = true, env = "MG_KEYSTORE")]
    pub keystore: Option<PathBuf>,
    /// Environment variable holding the key store's master password.
    #[arg(long, global = true, default_value = "MG_MASTER_PASSWORD", value_name = "VAR")]
    pub master_pass_env: String,
    /// Key server base URL. Defaults to the server of the saved login.
    #[arg(long, global = true, env = "MG_KEY_SERVER", value_name = "URL")]
    pub key_server: Option<String>,
    /// File server base URL, for attachments.
    #[arg(long, global = true, env = "MG_FILE_SERVER", value_name = "URL")]
    pub file_server: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Password,
    Rsa,
    Ibe,
}

impl SchemeArg {
    pub fn name(self) -> &'static str {
        match self {
            SchemeArg::Password => "password",
            SchemeArg::Rsa => "rsa",
            SchemeArg::Ibe => "ibe",
        }
    }
}

/// Picks one key system from the store.
#[derive(Debug, Args, Default)]
pub struct KeySelector {
    /// Fingerprint prefix, label or scheme name.
    #[arg(long)]
    pub key: Option<String>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long)]
    pub identity: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a key system and add it to the key store.
    Keygen(KeygenArgs),
    /// List key systems in the key store.
    List,
    /// Remove a key system from the key store.
    Remove {
        /// Fingerprint prefix or label.
        key: String,
    },
    /// Encrypt stdin (or --in) to armor on stdout.
    Encrypt(EncryptArgs),
    /// Decrypt an armored message from stdin (or --in).
    Decrypt(DecryptArgs),
    /// Find armored messages inside a text file.
    Scan(ScanArgs),
    /// Register an account on the key server.
    AccountCreate(AccountArgs),
    /// Log in to the key server and save the session beside the key store.
    Login(AccountArgs),
    /// Start proving ownership of an identity; a code is sent to it.
    Claim {
        #[arg(long)]
        identity: String,
    },
    /// Finish an ownership proof with the code that was delivered.
    Confirm {
        #[arg(long)]
        identity: String,
        #[arg(long)]
        proof_id: String,
        #[arg(long)]
        code: String,
    },
    /// Give up ownership of an identity and withdraw its published key.
    Release {
        #[arg(long)]
        identity: String,
    },
    /// Run the key server that proves identity ownership and hands out keys.
    ServeKeyserver(ServeKeyServerArgs),
    /// Run the file server that stores encrypted attachments.
    ServeFileserver(ServeFileServerArgs),
    /// Run the local agent that browser overlays talk to.
    ServeAgent(ServeAgentArgs),
    /// Write the static and dynamic overlay benchmark pages.
    BenchFixture(BenchFixtureArgs),
    /// Summarize benchmark timing records.
    BenchReport(BenchReportArgs),
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    /// Your identity (email address); required for rsa and ibe.
    #[arg(long)]
    pub identity: Option<String>,
    #[arg(long)]
    pub label: Option<String>,
    /// Environment variable holding the shared password (password scheme).
    #[arg(long, default_value = "MG_SHARED_PASSWORD", value_name = "VAR")]
    pub password_env: String,
    /// Keep only a verifier; the password is asked for on every use.
    #[arg(long)]
    pub no_store: bool,
    /// PBKDF2 iterations for the password scheme.
    #[arg(long)]
    pub iterations: Option<u32>,
}

#[derive(Debug, Args)]
pub struct EncryptArgs {
    #[command(flatten)]
    pub select: KeySelector,
    /// Comma-separated recipient identities (rsa, ibe).
    #[arg(long, value_delimiter = ',')]
    pub recipients: Vec<String>,
    /// Sign the package (rsa).
    #[arg(long)]
    pub sign: bool,
    /// Upload a file as an encrypted attachment; repeatable.
    #[arg(long, value_name = "FILE")]
    pub attach: Vec<PathBuf>,
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Environment variable with the shared password, for key systems that
    /// do not store it.
    #[arg(long, default_value = "MG_SHARED_PASSWORD", value_name = "VAR")]
    pub password_env: String,
}

#[derive(Debug, Args)]
pub struct DecryptArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Environment variable with a shared password to try when no stored
    /// key matches.
    #[arg(long, default_value = "MG_SHARED_PASSWORD", value_name = "VAR")]
    pub password_env: String,
    /// Directory to save attachments into.
    #[arg(long, value_name = "DIR")]
    pub save_attachments: Option<PathBuf>,
    /// Verify the signature against this identity's published key.
    #[arg(long)]
    pub signer: Option<String>,
    /// Refuse messages without a valid signature.
    #[arg(long)]
    pub require_signature: bool,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Text file to search; stdin when omitted.
    pub file: Option<PathBuf>,
    /// Also decrypt each message found and print its text.
    #[arg(long)]
    pub decrypt: bool,
    #[arg(long, default_value = "MG_SHARED_PASSWORD", value_name = "VAR")]
    pub password_env: String,
}

#[derive(Debug, Args)]
pub struct AccountArgs {
    #[arg(long)]
    pub username: String,
    /// Environment variable holding the key server account password.
    #[arg(long, default_value = "MG_SERVER_PASSWORD", value_name = "VAR")]
    pub password_env: String,
}

#[derive(Debug, Args)]
pub struct ServeKeyServerArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8750)]
    pub port: u16,
    /// State directory; omit to keep everything in memory.
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Directory where ownership-proof codes are written, one file per identity.
    #[arg(long, value_name = "DIR")]
    pub outbox: PathBuf,
    /// Environment variable with the passphrase sealing the IBE master secret.
    #[arg(long, default_value = "MG_SERVER_PASSPHRASE", value_name = "VAR")]
    pub passphrase_env: String,
    #[arg(long, default_value_t = 100_000)]
    pub password_iterations: u32,
}

#[derive(Debug, Args)]
pub struct ServeFileServerArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8751)]
    pub port: u16,
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Largest accepted blob in bytes.
    #[arg(long, default_value_t = mg_server::fileserver::DEFAULT_MAX_BLOB)]
    pub max_blob: usize,
}

#[derive(Debug, Args)]
pub struct ServeAgentArgs {
    #[arg(long, default_value_t = mg_server::agent::DEFAULT_PORT)]
    pub port: u16,
    /// Directory with a frontend build (overlay/read.html, overlay/compose.html,
    /// frontend.js, bookmarklet.js).
    #[arg(long, value_name = "DIR")]
    pub assets: Option<PathBuf>,
    /// File that benchmark records are appended to.
    #[arg(long, default_value = "bench-results.jsonl", value_name = "FILE")]
    pub bench_results: PathBuf,
    /// Minutes of inactivity before the agent locks again.
    #[arg(long, default_value_t = 30)]
    pub idle_minutes: u64,
}

#[derive(Debug, Args)]
pub struct BenchFixtureArgs {
    /// Elements per stage: half read payloads, half editable regions.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Delay before the stage-2 page inserts its elements.
    #[arg(long, default_value_t = 500)]
    pub dynamic_delay_ms: u64,
    /// Agent origin the pages load the frontend from.
    #[arg(long, default_value = "http://127.0.0.1:8747", value_name = "URL")]
    pub agent: String,
    /// Also add the fixture password key to the key store.
    #[arg(long)]
    pub import: bool,
}

#[derive(Debug, Args)]
pub struct BenchReportArgs {
    /// JSON-lines file written by the agent.
    pub results: PathBuf,
    /// Minimum runs required per (browser, stage, n) cell.
    #[arg(long, default_value_t = 10)]
    pub runs: usize,
    #[arg(long)]
    pub json: bool,
    /// Exit with status 1 when a regression is flagged.
    #[arg(long)]
    pub strict: bool,
}
