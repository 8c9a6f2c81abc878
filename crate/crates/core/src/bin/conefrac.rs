fn main() {
    std::process::exit(conefrac::cli::main_with_args(std::env::args_os()));
}
