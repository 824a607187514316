fn main() {
    std::process::exit(spectral_saturation::cli::run(std::env::args_os()));
}
