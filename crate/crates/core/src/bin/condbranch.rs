fn main() {
    std::process::exit(condbranch::cli::run_command(std::env::args_os()));
}
