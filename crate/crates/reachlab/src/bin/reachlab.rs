fn main() {
    std::process::exit(reachlab::cli::run(std::env::args_os()));
}
