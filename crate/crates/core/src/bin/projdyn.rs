fn main() {
    std::process::exit(projdyn::cli::main_with_args(std::env::args_os()));
}
