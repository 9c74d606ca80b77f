fn main() {
    std::process::exit(matlda_cli::run_cli(std::env::args_os()));
}
