fn main() {
    std::process::exit(lpvjump::cli::run(std::env::args_os()));
}
