fn main() {
    std::process::exit(bn_shapley::cli::run(std::env::args_os()));
}
