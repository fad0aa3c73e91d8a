fn main() {
    std::process::exit(ultrasemi_cli::run(std::env::args_os()));
}
