use clap::Parser;
use simgap_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((report, code)) => {
            eprintln!(
                "{}: wrote {} record(s) in {:.2}s",
                report.command,
                report.bounds.len(),
                report.runtime.elapsed_seconds
            );
            std::process::exit(code);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
