use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(sff_core::cli::run_from(std::env::args()) as u8)
}
