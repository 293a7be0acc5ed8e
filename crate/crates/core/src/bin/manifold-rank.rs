fn main() {
    std::process::exit(manifold_rank::cli::run(std::env::args_os()));
}
