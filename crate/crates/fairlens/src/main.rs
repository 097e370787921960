fn main() {
    if let Err(error) = fairlens::cli::run() {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
