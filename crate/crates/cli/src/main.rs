use clap::Parser;

fn main() -> anyhow::Result<()> {
    acord_cli::run(acord_cli::Cli::parse())
}
