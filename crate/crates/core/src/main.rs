fn main() {
    std::process::exit(gee2::cli::run(std::env::args_os()));
}
