fn main() {
    std::process::exit(textadapt::cli::run(std::env::args_os()));
}
