fn main() {
    std::process::exit(dka_core::cli::main_with_args(std::env::args_os()));
}
