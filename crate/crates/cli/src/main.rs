use clap::Parser;

use pvnext_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = pvnext_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
