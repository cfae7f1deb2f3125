fn main() {
    let code = otlab_cli::run(std::env::args().skip(1));
    std::process::exit(code);
}
