use clap::Parser;
use storyboard::cli::{run, Cli};

#[tokio::main]
async fn main() {
    let code = run(Cli::parse()).await;
    std::process::exit(code as i32);
}
