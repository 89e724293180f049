fn main() {
    std::process::exit(redemption_score::cli::run_command(std::env::args_os()));
}
