use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(wander3::cli::run(std::env::args()) as u8)
}
