fn main() {
    std::process::exit(ctx_strata::cli::main_with_args(std::env::args_os()));
}
