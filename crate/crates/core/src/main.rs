fn main() {
    std::process::exit(euler_ci::cli::main_with_args(std::env::args_os()));
}
