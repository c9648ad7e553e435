fn main() {
    std::process::exit(sgl_poisson::cli::run_from_args(std::env::args_os()));
}
