fn main() {
    std::process::exit(duetgen::cli::run(std::env::args()));
}
