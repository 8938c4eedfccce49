fn main() {
    std::process::exit(facepipe_core::cli::main_with_args(std::env::args_os()));
}
