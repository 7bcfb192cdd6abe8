//! The `serve-*` commands: bind, print the URL on stdout, run until Ctrl-C.

use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use mg_server::keyserver::delivery::OutboxDelivery;
use mg_server::serve::serve_forever;
use mg_server::{Agent, AgentConfig, FileServer, FileServerConfig, KeyServer, KeyServerConfig};

use crate::args::{ServeAgentArgs, ServeFileServerArgs, ServeKeyServerArgs};
use crate::commands::Context;
use crate::{CliError, CliResult};

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

fn announce(url: &str) {
    println!("listening on {url}");
    let _ = std::io::stdout().flush();
}

pub fn keyserver(args: ServeKeyServerArgs) -> CliResult<()> {
    init_logging();
    let passphrase = std::env::var(&args.passphrase_env).unwrap_or_default();
    if args.data_dir.is_some() && passphrase.is_empty() {
        return Err(CliError::Failed(format!(
            "set {} to the passphrase protecting the IBE master secret",
            args.passphrase_env
        )));
    }
    let delivery = OutboxDelivery::new(&args.outbox).map_err(CliError::io(args.outbox.display()))?;
    let mut config = KeyServerConfig::in_memory(Arc::new(delivery));
    config.data_dir = args.data_dir;
    config.passphrase = passphrase;
    config.password_iterations = args.password_iterations;
    let server = KeyServer::open(config)?;
    serve_forever(&args.host, args.port, |_| Ok(server.router()), announce).map_err(CliError::io("key server"))
}

pub fn fileserver(args: ServeFileServerArgs) -> CliResult<()> {
    init_logging();
    let config = FileServerConfig { data_dir: args.data_dir, max_blob: args.max_blob, ..Default::default() };
    let server = FileServer::open(config).map_err(CliError::io("file server storage"))?;
    serve_forever(&args.host, args.port, |_| Ok(server.router()), announce).map_err(CliError::io("file server"))
}

/// The agent only ever binds loopback.
pub fn agent(ctx: &Context, args: ServeAgentArgs) -> CliResult<()> {
    init_logging();
    let mut config = AgentConfig::new(ctx.keystore_path(), args.bench_results);
    config.key_server = ctx.key_server_url();
    config.assets_dir = args.assets;
    config.session_idle = Duration::from_secs(args.idle_minutes.max(1) * 60);
    serve_forever("127.0.0.1", args.port, |url| Ok(Agent::new(config, url)?.router()), announce)
        .map_err(CliError::io("agent"))
}
