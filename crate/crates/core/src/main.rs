fn main() {
    std::process::exit(muonium::cli::main_with_args(std::env::args_os()));
}
