fn main() {
    std::process::exit(rfbsde_cli::run());
}
