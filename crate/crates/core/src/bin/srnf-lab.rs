fn main() {
    std::process::exit(srnf_lab::cli::run(std::env::args_os()));
}
