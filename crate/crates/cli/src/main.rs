fn main() {
    std::process::exit(reach_surrogate::cli::run(std::env::args_os()));
}
