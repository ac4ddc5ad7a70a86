fn main() -> std::process::ExitCode {
    pvrag::cli::main_with_args(std::env::args_os())
}
