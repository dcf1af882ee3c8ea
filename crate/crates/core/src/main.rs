fn main() {
    std::process::exit(psync::cli_main(std::env::args_os()));
}
