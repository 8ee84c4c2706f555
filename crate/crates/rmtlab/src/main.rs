fn main() {
    std::process::exit(rmtlab::cli::run());
}
