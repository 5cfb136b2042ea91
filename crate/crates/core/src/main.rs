fn main() {
    std::process::exit(scrc::cli::run(std::env::args_os()));
}
