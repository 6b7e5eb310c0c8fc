fn main() {
    std::process::exit(varprox::cli::run(std::env::args_os()));
}
