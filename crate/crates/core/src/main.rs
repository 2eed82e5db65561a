fn main() {
    std::process::exit(diffcoef::cli::main_with_args());
}
