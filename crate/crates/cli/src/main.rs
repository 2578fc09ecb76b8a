use clap::Parser;
use dno_cli::commands::{run, Cli};

fn main() {
    let line: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    if let Err(e) = run(cli, &line) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
