use clap::Parser;
use tracing_subscriber::EnvFilter;

use cqkit::cli::{self, Cli};

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("CQKIT_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    if let Err(e) = cli::run(cli).await {
        eprintln!("{}", serde_json::to_string(&e).expect("errors serialize"));
        std::process::exit(e.exit_code());
    }
}
