fn main() {
    std::process::exit(multiplex_hawkes::cli::run());
}
