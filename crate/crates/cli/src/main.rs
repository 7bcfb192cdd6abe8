fn main() {
    std::process::exit(mg_cli::run(std::env::args_os()));
}
