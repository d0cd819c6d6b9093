use std::net::SocketAddr;
use std::sync::Arc;

use anyhow::Context;
use greenrunner_core::Reasoner;
use greenrunner_service::{router, DefaultOracleProvider, ExperimentService, ServiceOptions};
use tracing::info;
use tracing_subscriber::EnvFilter;

const ADDR_ENV: &str = "GREENRUNNER_ADDR";
const DATA_DIR_ENV: &str = "GREENRUNNER_DATA_DIR";

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();

    let addr: SocketAddr = std::env::var(ADDR_ENV)
        .unwrap_or_else(|_| "127.0.0.1:8080".into())
        .parse()
        .with_context(|| format!("{ADDR_ENV} is not a socket address"))?;
    let data_dir = std::env::var(DATA_DIR_ENV).unwrap_or_else(|_| "greenrunner-data".into());
    let reasoner = Reasoner::from_env().context("language model client")?;
    info!(?reasoner, %data_dir, "starting");

    let service = ExperimentService::open(&data_dir, reasoner, Arc::new(DefaultOracleProvider), ServiceOptions::default())
        .with_context(|| format!("opening store {data_dir}"))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    info!(%addr, "listening");
    axum::serve(listener, router(service.clone()))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    service.shutdown();
    Ok(())
}
