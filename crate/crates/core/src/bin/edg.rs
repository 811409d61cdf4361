fn main() {
    std::process::exit(edgchain_vault::cli::run(std::env::args_os()));
}
