fn main() {
    std::process::exit(chainedit::cli::run(std::env::args_os()));
}
