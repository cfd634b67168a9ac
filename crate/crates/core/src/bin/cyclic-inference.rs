fn main() {
    std::process::exit(cyclic_inference::cli::main_with_args(std::env::args().collect()));
}
