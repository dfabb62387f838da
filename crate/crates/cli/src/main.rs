fn main() {
    std::process::exit(cgw_cli::run(std::env::args_os()));
}
