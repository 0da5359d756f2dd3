fn main() {
    std::process::exit(gaitevents::cli::dispatch(std::env::args_os()));
}
