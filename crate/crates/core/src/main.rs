fn main() {
    std::process::exit(logicloss::harness::cli::main_with_args(std::env::args_os()));
}
