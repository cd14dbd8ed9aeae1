fn main() {
    std::process::exit(frfnet::cli::main_with(std::env::args_os()));
}
