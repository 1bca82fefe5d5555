fn main() {
    std::process::exit(partpyr_cli::run(std::env::args_os()));
}
