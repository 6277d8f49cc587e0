use clap::Parser;
use edm_raim_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("edm-raim: {e}");
        std::process::exit(e.exit_code());
    }
}
