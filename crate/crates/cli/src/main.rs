fn main() {
    std::process::exit(liftctl_cli::run(std::env::args_os()));
}
