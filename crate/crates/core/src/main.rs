fn main() {
    std::process::exit(ghostlab::experiments::cli_main(std::env::args_os()));
}
