fn main() {
    let code = torus_market::cli::main_with_args(std::env::args_os().collect());
    std::process::exit(code);
}
