fn main() {
    std::process::exit(lporl::cli::run(std::env::args_os()));
}
