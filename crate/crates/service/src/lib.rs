//! HTTP front end over the training and evaluation library.
//!
//! Long-running work (train, eval, compare) is submitted as a job and polled;
//! the small SEC endpoints answer synchronously.

pub mod jobs;
mod routes;

pub use jobs::JobStore;
pub use routes::{router, ApiError};

/// Serves on an already bound listener until the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(JobStore::default())).await
}
