fn main() {
    std::process::exit(gmcf_mini::cli::run(std::env::args_os()));
}
