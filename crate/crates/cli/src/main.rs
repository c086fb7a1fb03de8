fn main() {
    std::process::exit(urnsir_cli::cli_main(std::env::args_os()));
}
