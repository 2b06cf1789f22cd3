fn main() {
    std::process::exit(dynrecon_cli::run(std::env::args_os()));
}
