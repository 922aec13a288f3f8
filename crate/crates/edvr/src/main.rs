use std::process::ExitCode;

fn main() -> ExitCode {
    edvr::cli::run()
}
