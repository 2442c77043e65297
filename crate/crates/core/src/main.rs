fn main() {
    std::process::exit(netensemble::cli::main_with_args(std::env::args_os()));
}
