fn main() {
    env_logger::init();
    std::process::exit(relate::cli::run(std::env::args_os()));
}
