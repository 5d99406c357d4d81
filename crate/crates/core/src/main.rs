fn main() {
    std::process::exit(pavement_xai::cli::run(std::env::args_os()));
}
