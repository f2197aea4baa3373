fn main() {
    std::process::exit(hbf::cli::run(std::env::args_os()));
}
