fn main() {
    std::process::exit(serec::cli::run(std::env::args_os()));
}
