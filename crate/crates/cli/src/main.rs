mod args;
mod commands;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

fn init_logging() {
    let filter = std::env::var("REDE_LOG").unwrap_or_else(|_| "warn".into());
    env_logger::Builder::new().parse_filters(&filter).format_timestamp(None).init();
}

fn main() -> ExitCode {
    init_logging();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match args::Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command, &argv[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
