fn main() {
    std::process::exit(pragya::cli::run(std::env::args_os()));
}
