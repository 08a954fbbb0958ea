use std::process::ExitCode;

fn main() -> ExitCode {
    cfopt_cli::cli::run(std::env::args_os(), &mut std::io::stdout())
}
