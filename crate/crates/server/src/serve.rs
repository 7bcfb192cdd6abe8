//! Binding and running services, in the foreground or on a background thread.

use std::net::SocketAddr;
use std::thread::JoinHandle;

use axum::Router;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

pub async fn bind(host: &str, port: u16) -> std::io::Result<(TcpListener, String)> {
    let listener = TcpListener::bind((host, port)).await?;
    let addr = listener.local_addr()?;
    Ok((listener, format!("http://{addr}")))
}

pub async fn run(listener: TcpListener, router: Router) -> std::io::Result<()> {
    axum::serve(listener, router.into_make_service_with_connect_info::<SocketAddr>()).await
}

/// Binds `host:port`, passes the base URL to `make` and `announce`, then serves
/// on the calling thread until Ctrl-C.
pub fn serve_forever<F, A>(host: &str, port: u16, make: F, announce: A) -> std::io::Result<()>
where
    F: FnOnce(&str) -> std::io::Result<Router>,
    A: FnOnce(&str),
{
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let (listener, url) = bind(host, port).await?;
        let router = make(&url)?;
        announce(&url);
        let service = router.into_make_service_with_connect_info::<SocketAddr>();
        axum::serve(listener, service)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}

/// A service running on its own runtime thread; stopped on drop.
pub struct BackgroundServer {
    pub url: String,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl BackgroundServer {
    /// Binds 127.0.0.1 on `port` (0 for any) and serves the router built by
    /// `make`, which receives the final base URL.
    pub fn start<F>(port: u16, make: F) -> std::io::Result<Self>
    where
        F: FnOnce(&str) -> Router + Send + 'static,
    {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let (listener, url) = runtime.block_on(bind("127.0.0.1", port))?;
        let router = make(&url);
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let service = router.into_make_service_with_connect_info::<SocketAddr>();
                let _ = axum::serve(listener, service)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(BackgroundServer { url, shutdown: Some(tx), thread: Some(thread) })
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
