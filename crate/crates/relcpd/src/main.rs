fn main() {
    std::process::exit(relcpd::cli::run());
}
