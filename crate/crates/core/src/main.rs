fn main() {
    std::process::exit(ragtopics::cli::dispatch(std::env::args_os()));
}
