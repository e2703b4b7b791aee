fn main() {
    std::process::exit(rough_control::cli::run(std::env::args()));
}
