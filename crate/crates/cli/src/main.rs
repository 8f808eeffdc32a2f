fn main() {
    std::process::exit(pathqa_cli::run(std::env::args_os().skip(1)));
}
