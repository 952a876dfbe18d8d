use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(gnefair_core::cli::main_with_args(std::env::args_os()))
}
