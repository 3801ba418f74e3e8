fn main() {
    std::process::exit(zs_spectral::cli::run(std::env::args_os()));
}
