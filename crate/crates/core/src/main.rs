fn main() -> std::process::ExitCode {
    clstega::cli::main_with_args(std::env::args_os())
}
