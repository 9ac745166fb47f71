fn main() {
    std::process::exit(solitonlab::cli::run(std::env::args()));
}
