fn main() {
    std::process::exit(fragscan::cli::main_with_args(std::env::args_os()));
}
