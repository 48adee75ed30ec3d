fn main() {
    std::process::exit(speechtools::cli::run(std::env::args_os()));
}
