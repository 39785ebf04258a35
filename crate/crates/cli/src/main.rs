use clap::Parser;
use ucorr_cli::args::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = ucorr_cli::run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
