fn main() {
    std::process::exit(vlab_cli::run());
}
