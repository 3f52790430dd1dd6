fn main() {
    std::process::exit(ivtest_cli::run(std::env::args_os()));
}
