use clap::Parser;
use sonotext_gateway::cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let body = serde_json::json!({ "error": format!("{e:#}") });
        eprintln!("{body}");
        std::process::exit(1);
    }
}
