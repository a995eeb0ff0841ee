fn main() {
    std::process::exit(transit_demand::cli::run(std::env::args_os()));
}
