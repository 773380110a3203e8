fn main() {
    std::process::exit(ssgen_cli::run(std::env::args_os()));
}
