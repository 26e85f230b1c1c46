fn main() {
    std::process::exit(scenrisk::cli::run(std::env::args_os()));
}
