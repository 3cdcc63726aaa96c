fn main() {
    std::process::exit(sagres::cli::main_with(std::env::args_os()));
}
