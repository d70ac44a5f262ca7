fn main() {
    std::process::exit(nmlz::cli::run(std::env::args_os()));
}
