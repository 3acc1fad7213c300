//! Serves a scripted OpenAI-compatible endpoint until interrupted.

use clap::Parser;
use rcf_gateway::mock::{MockScript, MockServer};

#[derive(Parser)]
#[command(version, about = "Scripted OpenAI-compatible mock endpoint")]
struct Args {
    /// JSON script of request matchers and canned replies.
    #[arg(long)]
    script: std::path::PathBuf,
    #[arg(long, default_value = "127.0.0.1:8089")]
    addr: String,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    let server = MockServer::bind(MockScript::load(&args.script)?, &args.addr).await?;
    println!("mock listening on {}", server.base_url());
    tokio::signal::ctrl_c().await?;
    Ok(())
}
