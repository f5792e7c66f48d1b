use std::process::ExitCode;

fn main() -> ExitCode {
    pullback_lab::cli::main_entry()
}
