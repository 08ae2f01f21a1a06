fn main() {
    let code = viscofem::cli::run(std::env::args_os());
    std::process::exit(code);
}
