use std::process::ExitCode;

fn main() -> ExitCode {
    vocabsize_service::cli::main()
}
