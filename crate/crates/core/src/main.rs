fn main() {
    std::process::exit(oxytaxis::cli::cli(std::env::args_os()));
}
