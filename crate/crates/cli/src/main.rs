use std::io::Write;

use clap::Parser;
use idxtrack_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            let _ = writeln!(std::io::stdout(), "{report}");
        }
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "{e}");
            std::process::exit(e.exit_code());
        }
    }
}
