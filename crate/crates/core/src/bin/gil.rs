fn main() {
    std::process::exit(gil_core::cli::run(std::env::args_os()));
}
