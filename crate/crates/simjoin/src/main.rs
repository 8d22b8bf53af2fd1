fn main() {
    std::process::exit(simjoin::cli::run(std::env::args_os()));
}
