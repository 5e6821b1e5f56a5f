fn main() {
    std::process::exit(anderson_phi42::cli::run(std::env::args().skip(1).collect()));
}
