fn main() {
    std::process::exit(bidshade::cli::run(std::env::args_os()));
}
