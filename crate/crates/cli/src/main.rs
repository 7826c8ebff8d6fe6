fn main() {
    std::process::exit(fricsym_cli::run(std::env::args_os()));
}
