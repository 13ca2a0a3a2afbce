fn main() {
    std::process::exit(sirenpose::cli::cli_main(std::env::args()));
}
