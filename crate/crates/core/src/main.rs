fn main() {
    std::process::exit(gp2f::cli::main_with_args(std::env::args_os()));
}
