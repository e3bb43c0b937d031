fn main() {
    std::process::exit(samplecurve::cli::main_with_args(std::env::args_os()));
}
