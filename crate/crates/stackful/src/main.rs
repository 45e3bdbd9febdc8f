use std::process::ExitCode;

fn main() -> ExitCode {
    stackful::cli::main()
}
