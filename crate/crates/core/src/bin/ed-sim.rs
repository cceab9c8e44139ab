use std::process::ExitCode;

use clap::Parser;
use massive_ed::cli::{run, Args, Failure};

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(m) => eprintln!("error: {m}"),
                Failure::Runtime(m) => eprintln!("runtime error: {m}"),
            }
            f.exit_code()
        }
    }
}
