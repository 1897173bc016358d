use chartguide::cli::{run, Cli};
use clap::Parser;

fn main() {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_env_filter(env_filter()).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn env_filter() -> tracing_subscriber::EnvFilter {
    tracing_subscriber::EnvFilter::try_from_env("CHARTGUIDE_LOG").unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"))
}
