fn main() {
    std::process::exit(anderson_meso::cli::run(std::env::args_os()));
}
