fn main() {
    std::process::exit(arshape::cli::run(std::env::args_os()));
}
