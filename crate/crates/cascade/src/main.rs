fn main() {
    std::process::exit(unfold_cascade::cli::main_with(std::env::args_os()));
}
