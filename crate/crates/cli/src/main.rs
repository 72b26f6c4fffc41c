fn main() {
    std::process::exit(bdk_cli::run(std::env::args_os()));
}
