use clap::Parser;
use elastoacoustic_cli::{run, Cli};

fn main() -> anyhow::Result<()> {
    let manifest = run(Cli::parse())?;
    eprintln!("wrote {}", manifest.display());
    Ok(())
}
