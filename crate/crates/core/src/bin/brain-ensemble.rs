fn main() {
    std::process::exit(brain_ensemble::cli::main_with_args(std::env::args_os()));
}
