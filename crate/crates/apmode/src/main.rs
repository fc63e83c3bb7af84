fn main() {
    std::process::exit(apmode::cli_main(std::env::args_os()));
}
