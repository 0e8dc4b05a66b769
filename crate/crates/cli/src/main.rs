fn main() {
    std::process::exit(narrate_cli::run(std::env::args_os()));
}
