fn main() {
    std::process::exit(dejong_cli::run(std::env::args_os()));
}
