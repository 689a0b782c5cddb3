fn main() {
    std::process::exit(mergenet::cli::run(std::env::args_os()));
}
