fn main() {
    std::process::exit(beable::cli::run_command(std::env::args_os()));
}
