fn main() {
    std::process::exit(contam_audit::cli::run(std::env::args_os()));
}
