fn main() {
    std::process::exit(maskfuse::cli::run(std::env::args_os()));
}
