fn main() {
    std::process::exit(tsc_cli::cli_main(std::env::args_os()));
}
