fn main() {
    std::process::exit(heliogen::cli::run(std::env::args_os()));
}
