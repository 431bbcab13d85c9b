fn main() {
    std::process::exit(kanlab::cli::run(std::env::args_os()));
}
