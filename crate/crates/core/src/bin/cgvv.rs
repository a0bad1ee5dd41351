fn main() {
    std::process::exit(cgvv::cli::run());
}
