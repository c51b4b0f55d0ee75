fn main() {
    std::process::exit(splatlift_cli::run(std::env::args_os()));
}
