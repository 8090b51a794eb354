fn main() {
    std::process::exit(neumann_cli::main_with_args(std::env::args_os()));
}
