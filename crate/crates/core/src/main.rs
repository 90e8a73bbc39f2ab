fn main() {
    std::process::exit(sidapbc::cli::run(std::env::args_os()));
}
