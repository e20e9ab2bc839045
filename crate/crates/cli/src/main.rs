fn main() {
    std::process::exit(supermarket_cli::run_cli(std::env::args_os()));
}
