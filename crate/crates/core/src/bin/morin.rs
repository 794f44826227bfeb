fn main() {
    std::process::exit(morin::cli::main_with_args(std::env::args_os()));
}
