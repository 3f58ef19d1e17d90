fn main() {
    std::process::exit(carclust::cli::run(std::env::args_os()));
}
