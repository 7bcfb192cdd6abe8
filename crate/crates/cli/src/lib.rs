//! The `mg` command-line tool.

pub mod args;
pub mod bench;
mod commands;
mod serve;
pub mod session;

use std::ffi::OsString;

use clap::Parser;

use args::{Cli, Command};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] mg_core::Error),
    /// A failure the key scheme knows how to resolve.
    #[error("{source}")]
    Hinted { source: mg_core::Error, hint: String },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error(transparent)]
    Bench(#[from] bench::BenchError),
    #[error("key server cannot start: {0}")]
    Startup(#[from] mg_server::keyserver::StartupError),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
        let context = context.to_string();
        move |source| CliError::Io { context, source }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("mg: {e}");
            if let CliError::Hinted { hint, .. } = &e {
                eprintln!("hint: {hint}");
            }
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> CliResult<i32> {
    let ctx = commands::Context::new(cli.global);
    match cli.command {
        Command::Keygen(a) => commands::keygen(&ctx, a),
        Command::List => commands::list(&ctx),
        Command::Remove { key } => commands::remove(&ctx, &key),
        Command::Encrypt(a) => commands::encrypt(&ctx, a),
        Command::Decrypt(a) => commands::decrypt(&ctx, a),
        Command::Scan(a) => commands::scan(&ctx, a),
        Command::AccountCreate(a) => commands::account_create(&ctx, a),
        Command::Login(a) => commands::login(&ctx, a),
        Command::Claim { identity } => commands::claim(&ctx, &identity),
        Command::Confirm { identity, proof_id, code } => commands::confirm(&ctx, &identity, &proof_id, &code),
        Command::Release { identity } => commands::release(&ctx, &identity),
        Command::ServeKeyserver(a) => serve::keyserver(a),
        Command::ServeFileserver(a) => serve::fileserver(a),
        Command::ServeAgent(a) => serve::agent(&ctx, a),
        Command::BenchFixture(a) => commands::bench_fixture(&ctx, a),
        Command::BenchReport(a) => return commands::bench_report(a),
    }
    .map(|()| 0)
}
