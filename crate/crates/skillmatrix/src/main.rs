use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(skillmatrix::cli::run(std::env::args_os()))
}
