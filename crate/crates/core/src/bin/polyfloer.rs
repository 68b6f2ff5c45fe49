fn main() {
    std::process::exit(polyfloer::cli::run(std::env::args_os()));
}
