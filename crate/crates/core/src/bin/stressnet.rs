fn main() {
    std::process::exit(stressnet::cli::run_cli(std::env::args_os()));
}
