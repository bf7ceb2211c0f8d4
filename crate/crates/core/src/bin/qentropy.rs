fn main() {
    std::process::exit(qentropy::cli::run(std::env::args_os()));
}
