fn main() {
    std::process::exit(pim::cli::run(std::env::args()));
}
