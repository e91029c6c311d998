use std::process::ExitCode;

fn main() -> ExitCode {
    biokin::cli::run()
}
