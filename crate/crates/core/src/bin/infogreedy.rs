fn main() {
    std::process::exit(infogreedy::cli::cli_main(std::env::args_os()));
}
