fn main() {
    std::process::exit(lens_effort::cli::dispatch(std::env::args_os()));
}
