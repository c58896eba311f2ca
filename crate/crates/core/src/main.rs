fn main() {
    std::process::exit(dynprice::cli::run(std::env::args_os()));
}
