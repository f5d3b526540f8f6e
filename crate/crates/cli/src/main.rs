use std::process::ExitCode;

fn main() -> ExitCode {
    werange_cli::main_with(std::env::args_os())
}
