use clap::Parser;

use extruder_thermal_cli::{init_logging, report_error, run, Cli};

fn main() {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(&cli) {
        Ok(text) => print!("{text}"),
        Err(e) => std::process::exit(report_error(&e)),
    }
}
