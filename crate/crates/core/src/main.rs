fn main() {
    std::process::exit(cogdpm::cli::run(std::env::args_os()));
}
