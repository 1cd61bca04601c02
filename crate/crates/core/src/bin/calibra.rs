fn main() {
    std::process::exit(calibra::cli::run(std::env::args_os()));
}
