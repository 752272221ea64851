use clap::Parser;
use shufflesim::runner::{run, Cli};

fn main() -> anyhow::Result<()> {
    run(Cli::parse())
}
