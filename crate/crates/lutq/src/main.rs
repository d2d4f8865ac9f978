fn main() {
    std::process::exit(lutq::cli::run());
}
