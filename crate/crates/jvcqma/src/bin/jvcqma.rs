fn main() {
    std::process::exit(jvcqma::cli::run());
}
