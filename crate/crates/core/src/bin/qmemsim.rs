use std::process::ExitCode;

fn main() -> ExitCode {
    qmemsim::cli::main_with_args(std::env::args_os())
}
