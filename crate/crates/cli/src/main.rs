fn main() {
    std::process::exit(spine_cli::main_with_args(std::env::args_os()));
}
