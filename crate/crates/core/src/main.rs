fn main() {
    std::process::exit(lpv_wprime::cli::main_with_args(std::env::args_os()));
}
