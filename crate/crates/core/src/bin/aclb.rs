fn main() {
    std::process::exit(aclb::cli::dispatch(std::env::args_os()));
}
