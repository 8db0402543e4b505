fn main() {
    std::process::exit(bakeoff::cli::cli_main(std::env::args_os()));
}
