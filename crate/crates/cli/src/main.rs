use clap::Parser;
use triformer_cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
