fn main() {
    std::process::exit(rodfit::cli::main_with_args(std::env::args_os()));
}
