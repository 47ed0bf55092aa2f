fn main() {
    std::process::exit(edpm_cli::dispatch(std::env::args_os()));
}
