fn main() {
    std::process::exit(dln_cli::main_with_args(std::env::args_os()));
}
