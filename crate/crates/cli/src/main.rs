use clap::Parser;

use bvs_cli::args::Cli;
use bvs_cli::error::EXIT_OK;

fn main() {
    let cli = Cli::parse();
    let code = match bvs_cli::execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("bvs: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
