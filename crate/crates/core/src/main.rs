fn main() {
    std::process::exit(bws_core::cli::run());
}
