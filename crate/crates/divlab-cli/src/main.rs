fn main() {
    std::process::exit(divlab_cli::main_with_args(std::env::args_os()));
}
