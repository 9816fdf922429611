fn main() {
    std::process::exit(fou_cli::cli::run(std::env::args_os()));
}
