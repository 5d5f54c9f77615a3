fn main() {
    std::process::exit(fairsel::cli::run(std::env::args_os()));
}
