use clap::Parser;
use fibrewise::cli::{run, Cli};

fn main() {
    std::process::exit(run(&Cli::parse()));
}
