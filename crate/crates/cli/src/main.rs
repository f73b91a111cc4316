use clap::Parser;
use hopfix_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("hopfix: {e}");
        std::process::exit(e.exit_code());
    }
}
