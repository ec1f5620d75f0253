fn main() {
    std::process::exit(fmem::cli::run(std::env::args_os()));
}
