fn main() {
    std::process::exit(hrnn::cli::main_with_args(std::env::args_os()));
}
