fn main() {
    std::process::exit(tiltsel::cli::run(std::env::args_os()));
}
