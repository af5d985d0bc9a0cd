fn main() {
    std::process::exit(emergence_cli::run(std::env::args_os()));
}
