use std::io::{self, Write};

use clap::Parser;
use namegauge::cli::{run, Cli, EXIT_ERROR};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let code = match run(cli, &mut out, &mut input) {
        Ok(code) => code,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    };
    let _ = out.flush();
    std::process::exit(code);
}
