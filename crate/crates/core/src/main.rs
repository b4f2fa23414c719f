fn main() {
    std::process::exit(tourney_gp::cli::main_with(std::env::args_os()));
}
