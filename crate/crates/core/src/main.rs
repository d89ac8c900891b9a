fn main() {
    std::process::exit(naimishnet::cli::run(std::env::args_os()));
}
